use std::collections::BTreeMap;
use std::path::PathBuf;

use nhext_core::connection::levi_civita;
use nhext_core::dynamics::{forces, multipliers};
use nhext_core::extension::{
    certify, chaplygin_solve, complete_metric, condition_a_residual, condition_b_residual,
    fit_ansatz, sample_states, scan_parameter, scan_point, solve_pointwise, Ansatz,
    CertifyOptions, ChaplyginOptions, Completion, FitResult, Mode, ScanOptions, ThetaCandidate,
};
use nhext_core::geometry::{halton_points, random_vectors};
use nhext_core::integrate::{compare, gauss_check_a, gauss_check_b, integrate, Trajectory};
use nhext_core::systems::{self, builtin, carriage_l_star};
use nhext_core::{Expression, MetricSpec, QuasiState, SprayKind, System};
use serde_json::{json, Value};

use crate::config::{self, Source, Tolerances};
use crate::output::{ensure_dir, to_json, write_text, write_trajectory_csv};
use crate::plot::{line_plot, Series};
use crate::{Cli, CliError, CliResult, Command, Common, Outcome, SCHEMA};

/// Verdict for a system without any `𝒟`-preserving geodesic extension.
pub const NO_EXTENSION: &str = "no 𝒟-preserving geodesic extension";

/// States used for the Gauss-type and trajectory checks.
const CHECK_STATES: usize = 4;

struct Ctx<'a> {
    common: &'a Common,
    sys: System,
    source: Source,
    tols: Tolerances,
    command: &'static str,
}

impl Ctx<'_> {
    fn header(&self) -> Value {
        let spec = &self.sys.spec;
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "system": {
                "name": spec.name,
                "source": self.source,
                "n": self.sys.n(),
                "m": self.sys.m(),
                "coordinates": spec.coordinates,
                "frame_labels": (0..self.sys.n()).map(|b| spec.frame_label(b)).collect::<Vec<_>>(),
                "parameters": spec.parameters,
                "box": spec.coordinates.iter().zip(self.sys.ranges())
                    .map(|(c, r)| (c.clone(), [r.0, r.1]))
                    .collect::<BTreeMap<_, _>>(),
            },
            "seed": self.common.seed,
            "samples": self.common.samples,
            "tolerances": self.tols,
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.common
            .out
            .join(format!("{}_{}", self.sys.spec.name, suffix))
    }

    fn states(&self) -> Vec<QuasiState> {
        sample_states(&self.sys, self.common.samples, self.common.seed)
    }

    fn points(&self) -> Vec<Vec<f64>> {
        halton_points(self.sys.ranges(), self.common.samples, self.common.seed)
    }

    fn center(&self) -> Vec<f64> {
        self.sys
            .ranges()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            t_end: self.common.t_end,
            dt: self.common.dt,
            force_tol: self.tols.force,
            trajectory_tol: self.tols.trajectory,
            gauss_a_tol: self.tols.gauss_a,
            gauss_b_tol: self.tols.gauss_b,
            ..CertifyOptions::default()
        }
    }

    /// Writes the report and returns the outcome.
    fn finish(
        &self,
        mut report: Value,
        pass: bool,
        verdict: String,
        mut artifacts: Vec<PathBuf>,
    ) -> CliResult<Outcome> {
        let path = self.path(&format!("{}.json", self.command));
        report["verdict"] = json!({ "pass": pass, "text": verdict });
        report["artifacts"] = json!(artifacts
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>());
        write_text(&path, &(to_json(&report) + "\n"))?;
        artifacts.insert(0, path);
        Ok(Outcome {
            code: if pass { 0 } else { 2 },
            report,
            verdict,
            artifacts,
        })
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let common = &cli.common;
    let tols = config::tolerances(common)?;
    if !(common.dt > 0.0 && common.t_end >= 0.0) {
        return Err(CliError::args("--dt must be positive and --t-end non-negative"));
    }
    if common.samples == 0 {
        return Err(CliError::args("--samples must be positive"));
    }
    let (sys, source) = config::load_system(common)?;
    let command = match cli.command {
        Command::Validate => "validate",
        Command::Check => "check",
        Command::Extend { .. } => "extend",
        Command::Simulate { .. } => "simulate",
        Command::Compare { .. } => "compare",
        Command::Gauss => "gauss",
    };
    let ctx = Ctx {
        common,
        sys,
        source,
        tols,
        command,
    };
    ensure_dir(&common.out)?;
    match &cli.command {
        Command::Validate => validate(&ctx),
        Command::Check => check(&ctx),
        Command::Extend {
            alpha,
            beta,
            no_chaplygin,
        } => {
            let policy = match (alpha, beta) {
                (Some(a), _) => Completion::Alpha { alpha: *a },
                (_, Some(b)) => Completion::Beta { beta: *b },
                _ => Completion::default(),
            };
            extend(&ctx, policy, !no_chaplygin)
        }
        Command::Simulate { kind, plot } => simulate(&ctx, kind, plot.as_deref()),
        Command::Compare {
            perturb,
            perturb_coords,
            plot,
        } => compare_cmd(&ctx, *perturb, perturb_coords, plot.as_deref()),
        Command::Gauss => gauss(&ctx),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `(1, 1/2, 1/3, ...)`
fn harmonic(len: usize) -> Vec<f64> {
    (1..=len).map(|i| 1.0 / i as f64).collect()
}

fn validate(ctx: &Ctx) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let pts = ctx.points();
    let mut min_eig = f64::INFINITY;
    let mut min_eig_dd = f64::INFINITY;
    for q in &pts {
        let g = sys.frame_metric(q.as_slice())?;
        min_eig = min_eig.min(g.sym_eigenvalues()[0]);
        min_eig_dd = min_eig_dd.min(g.block(0, 0, sys.m(), sys.m()).sym_eigenvalues()[0]);
    }
    let mut report = ctx.header();
    report["validation"] = json!({
        "points": pts.len(),
        "min_metric_eigenvalue": min_eig,
        "min_constrained_eigenvalue": min_eig_dd,
        "max_off_block": sys.max_off_block(&pts)?,
        "metric_scale": sys.metric_scale(&pts)?,
        "chaplygin_bracket_residual": if sys.has_chaplygin() {
            Some(sys.chaplygin_bracket_residual(&pts)?)
        } else {
            None
        },
    });
    ctx.finish(report, true, "system is valid".into(), Vec::new())
}

/// Symmetrized `Γ^i_(ab)` of the Levi-Civita connection at `q`, keyed by
/// frame labels.
fn gamma_ia(sys: &System, q: &[f64]) -> CliResult<BTreeMap<String, f64>> {
    let lc = levi_civita(sys, q)?;
    let spec = &sys.spec;
    let mut out = BTreeMap::new();
    for i in sys.m()..sys.n() {
        for a in 0..sys.m() {
            for b in a..sys.m() {
                let v = 0.5 * (lc.get(i, a, b) + lc.get(i, b, a));
                let key = format!(
                    "Γ^{}_({} {})",
                    spec.frame_label(i),
                    spec.frame_label(a),
                    spec.frame_label(b)
                );
                out.insert(key, v);
            }
        }
    }
    Ok(out)
}

fn metric_off_block(ghat: &System) -> Option<&Vec<Vec<Expression>>> {
    match &ghat.spec.metric {
        MetricSpec::Extension { off, .. } => Some(off),
        _ => None,
    }
}

fn check(ctx: &Ctx) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let states = ctx.states();
    let mut report = ctx.header();
    if let Some(ghat) = config::load_metric(ctx.common, sys)? {
        return check_metric(ctx, &ghat, states, report);
    }
    // on-𝒞 agreement of the extension sprays with the nonholonomic field
    let mut kinds = BTreeMap::new();
    let mut pass = true;
    let mut lambda_max: f64 = 0.0;
    for kind in SprayKind::EXTENSIONS {
        let mut worst = (0.0_f64, None);
        for st in &states {
            let f_nh = forces(sys, SprayKind::Nonholonomic, st.q.as_slice(), st.v.as_slice())?;
            let f = forces(sys, kind, st.q.as_slice(), st.v.as_slice())?;
            let d = max_diff(&f_nh, &f) / (1.0 + max_abs(&f_nh));
            if d > worst.0 || worst.1.is_none() {
                worst = (worst.0.max(d), Some(st.clone()));
            }
        }
        let ok = worst.0 <= ctx.tols.force;
        pass &= ok;
        kinds.insert(
            kind.name(),
            json!({ "max_rel_diff": worst.0, "pass": ok, "witness": if ok { None } else { worst.1 } }),
        );
    }
    for st in &states {
        lambda_max = lambda_max.max(max_abs(&multipliers(
            sys,
            st.q.as_slice(),
            &st.v[..sys.m()],
        )?));
    }
    let center = ctx.center();
    let velocities = random_vectors(sys.m(), ctx.common.samples.max(2 * sys.m()), ctx.common.seed);
    let pw = solve_pointwise(sys, Mode::Standard, &center, &velocities, ctx.common.depth)?;
    report["check"] = json!({
        "on_constraint_agreement": kinds,
        "max_abs_multiplier": lambda_max,
        "pointwise_at_center": {
            "q": center,
            "rank": pw.rank,
            "nullity": pw.nullity,
            "particular": pw.particular,
            "algebraic_residual": pw.algebraic_residual,
            "feasible": pw.feasible,
        },
        "gamma_at_center": gamma_ia(sys, &center)?,
    });
    let verdict = if pass {
        "extension sprays agree with the nonholonomic field on 𝒞".to_string()
    } else {
        "extension sprays disagree with the nonholonomic field on 𝒞".to_string()
    };
    ctx.finish(report, pass, verdict, Vec::new())
}

/// Conditions (A), (B) for the off block of `ghat`, plus certification.
fn check_metric(
    ctx: &Ctx,
    ghat: &System,
    states: Vec<QuasiState>,
    mut report: Value,
) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let mut conditions = BTreeMap::new();
    let mut pass = true;
    let mut failed = Vec::new();
    if let Some(off) = metric_off_block(ghat).filter(|_| ghat.spec.frame == sys.spec.frame) {
        let cand = ThetaCandidate::field(sys, off)?;
        let scale = sys.metric_scale(&ctx.points())?;
        for (name, b) in [("A", false), ("B", true)] {
            let mut worst = (0.0_f64, None);
            for st in &states {
                let (q, va) = (st.q.as_slice(), &st.v[..sys.m()]);
                let r = if b {
                    condition_b_residual(sys, &cand, q, va)?
                } else {
                    condition_a_residual(sys, &cand, q, va)?
                };
                let r = max_abs(&r) / scale;
                if r > worst.0 || worst.1.is_none() {
                    worst = (worst.0.max(r), Some(st.clone()));
                }
            }
            let ok = worst.0 < ctx.tols.feas;
            if !ok {
                failed.push(name.to_string());
            }
            pass &= ok;
            conditions.insert(
                name,
                json!({ "max_abs": worst.0, "pass": ok, "witness": if ok { None } else { worst.1 } }),
            );
        }
    }
    let n_cert = states.len().min(2 * CHECK_STATES);
    let cert = certify(sys, ghat, &states[..n_cert], &ctx.certify_options())?;
    pass &= cert.pass;
    for c in [&cert.on_constraint_forces, &cert.trajectories, &cert.gauss_b] {
        if !c.pass {
            failed.push(c.name.clone());
        }
    }
    report["check"] = json!({ "conditions": conditions, "certification": cert });
    let verdict = if pass {
        "metric is a 𝒟-preserving geodesic extension".to_string()
    } else {
        format!("metric is not a geodesic extension: failed {}", failed.join(", "))
    };
    ctx.finish(report, pass, verdict, Vec::new())
}

fn load_ansatz(ctx: &Ctx) -> CliResult<Option<Ansatz>> {
    let Some(path) = &ctx.common.ansatz_file else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(Some(Ansatz::from_json(&text, ctx.sys.m(), ctx.sys.k())?))
}

/// Decimal places kept when printing fitted expressions.
const SHOWN_DECIMALS: i32 = 10;

fn shown(block: &[Vec<Expression>]) -> Vec<Vec<String>> {
    block
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| e.rounded(SHOWN_DECIMALS).to_string())
                .collect()
        })
        .collect()
}

fn slot_names(sys: &System) -> Vec<String> {
    let spec = &sys.spec;
    let mut out = Vec::new();
    for a in 0..sys.m() {
        for i in sys.m()..sys.n() {
            out.push(format!("ĝ_({} {})", spec.frame_label(a), spec.frame_label(i)));
        }
    }
    out
}

fn extend(ctx: &Ctx, policy: Completion, chaplygin: bool) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let common = ctx.common;
    let ansatz = load_ansatz(ctx)?;
    let basis = ansatz
        .clone()
        .unwrap_or_else(|| Ansatz::default_for(&sys.spec));
    let states = ctx.states();
    let fit = fit_ansatz(sys, Mode::Standard, &basis, &states, common.depth, ctx.tols.feas)?;
    let mut report = ctx.header();
    let block = shown(&fit.off_block());
    let slots: BTreeMap<String, String> = slot_names(sys)
        .into_iter()
        .zip(block.iter().flatten().cloned())
        .collect();
    report["fit"] = json!({
        "ansatz": basis,
        "coefficients": fit.coefficients,
        "off_block": block,
        "slots": slots,
        "a_only": fit.a_only,
        "report": fit.report,
    });
    let mut artifacts = Vec::new();
    let mut pass = fit.report.feasible;
    let mut verdict;
    if fit.report.feasible {
        let (ok, text) = complete_and_certify(ctx, &fit, policy, &states, &mut report, &mut artifacts)?;
        pass = ok;
        verdict = text;
    } else {
        let failed: Vec<&str> = fit
            .report
            .conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.condition.as_str())
            .collect();
        let forced_zero = fit.a_only.nullity == 0 && fit.a_only.particular_max_abs < 1e-12;
        let center = ctx.center();
        let gamma = gamma_ia(sys, &center)?;
        let nonzero: BTreeMap<&String, &f64> =
            gamma.iter().filter(|(_, v)| v.abs() > 1e-10).collect();
        verdict = format!("{NO_EXTENSION}: condition {} violated", failed.join(", "));
        if forced_zero {
            verdict.push_str("; (A) forces ĝ_ai = 0");
            if let Some((k, v)) = nonzero.iter().next() {
                verdict.push_str(&format!(" but {k} = {v} at the box center"));
            }
        }
        let witnesses: BTreeMap<&str, &Option<QuasiState>> = fit
            .report
            .conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| (c.condition.as_str(), &c.witness))
            .collect();
        report["obstruction"] = json!({
            "failed_conditions": failed,
            "witnesses": witnesses,
            "a_forces_zero": forced_zero,
            "a_nullity": fit.a_only.nullity,
            "center": center,
            "gamma_at_center": gamma,
            "nonzero_gamma_at_center": nonzero,
        });
    }
    if chaplygin && sys.has_chaplygin() {
        let opts = ChaplyginOptions {
            samples: common.samples,
            seed: common.seed,
            depth: common.depth,
            tol: ctx.tols.feas,
            completion: policy,
            dt: common.dt,
            ..ChaplyginOptions::default()
        };
        match chaplygin_solve(&sys.spec, ansatz.as_ref(), &opts) {
            Ok(sol) => {
                report["chaplygin"] = json!({
                    "feasible": sol.report.feasible,
                    "mu_coefficients": sol.mu_coefficients,
                    "mu": shown(&sol.mu),
                    "off_block": shown(&sol.off),
                    "first_integral_drift": sol.first_integral_drift,
                    "min_eigenvalue": sol.completed.as_ref().map(|c| c.min_eigenvalue),
                    "report": sol.report,
                });
            }
            Err(e) => report["chaplygin"] = json!({ "error": CliError::from(e).to_string() }),
        }
    }
    if sys.spec.name == "carriage" && matches!(ctx.source, Source::Builtin(_)) {
        report["offset_scan"] = carriage_scan(ctx)?;
    }
    ctx.finish(report, pass, verdict, artifacts)
}

fn complete_and_certify(
    ctx: &Ctx,
    fit: &FitResult,
    policy: Completion,
    states: &[QuasiState],
    report: &mut Value,
    artifacts: &mut Vec<PathBuf>,
) -> CliResult<(bool, String)> {
    let sys = &ctx.sys;
    let completed = match complete_metric(sys, &fit.off_block(), policy, &ctx.points()) {
        Ok(c) => c,
        Err(e @ nhext_core::Error::NotPositiveDefinite { .. }) => {
            report["completion"] = json!({
                "policy": policy,
                "positive_definite": false,
                "error": CliError::from(e).to_string(),
            });
            return Ok((
                false,
                "completion rejected: ĝ is not positive-definite".into(),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let ghat_path = ctx.path("ghat.json");
    systems::save(&completed.system.spec, &ghat_path)?;
    artifacts.push(ghat_path);
    let n_cert = states.len().min(2 * CHECK_STATES);
    let cert = certify(sys, &completed.system, &states[..n_cert], &ctx.certify_options())?;
    report["completion"] = json!({
        "policy": completed.policy,
        "ij": completed.ij,
        "max_sigma": completed.max_sigma,
        "min_eigenvalue": completed.min_eigenvalue,
        "positive_definite": completed.positive_definite,
    });
    report["certification"] = json!(cert);
    let mut text = if cert.pass {
        "𝒟-preserving geodesic extension found and certified".to_string()
    } else {
        let failed: Vec<&str> = [&cert.on_constraint_forces, &cert.trajectories, &cert.gauss_b]
            .into_iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        format!("extension found but certification failed: {}", failed.join(", "))
    };
    if !completed.positive_definite {
        text.push_str(" (completed metric is indefinite)");
    }
    Ok((cert.pass, text))
}

/// Feasibility in the carriage offset `l`, with the boundary located by
/// bisection on the signed (B) probe.
fn carriage_scan(ctx: &Ctx) -> CliResult<Value> {
    let common = ctx.common;
    let base = ctx.sys.spec.parameters.clone();
    let l_star = carriage_l_star(&base)?;
    let make = |l: f64| {
        let mut p = base.clone();
        p.insert("l".into(), l);
        builtin("carriage", &p)
    };
    let opts = ScanOptions {
        samples: common.samples,
        seed: common.seed,
        depth: common.depth,
        tol: ctx.tols.feas,
        ..ScanOptions::new(vec![0.0; ctx.sys.n()], vec![1.0, -1.0])
    };
    let mut values = vec![0.0, 0.1, base["l"], l_star];
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let probe = |l: f64| -> CliResult<f64> {
        Ok(scan_point(&make, None, l, &opts)?.probe)
    };
    // the metric degenerates at sqrt(m J)/m0; bracket above it
    let l_deg = (base["m"] * base["J"]).sqrt() / base["m0"];
    let mut lo = 2.0 * l_deg;
    if lo >= l_star || probe(lo)? >= 0.0 {
        lo = 1.01 * l_deg;
    }
    let mut hi = 2.0 * l_star.max(lo);
    let mut tries = 0;
    while probe(hi)? <= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(CliError::from(nhext_core::Error::Precondition(
                "no sign change of the (B) probe above the offset bracket".into(),
            )));
        }
    }
    let scan = scan_parameter("l", &make, None, &values, Some((lo, hi)), &opts)?;
    let boundary = scan.boundary.unwrap_or(f64::NAN);
    Ok(json!({
        "scan": scan,
        "probe_q": opts.probe_q,
        "probe_v": opts.probe_v,
        "closed_form": l_star,
        "relative_error": ((boundary - l_star) / l_star).abs(),
    }))
}

fn plot_svg(
    ctx: &Ctx,
    suffix: &str,
    axes: (usize, usize),
    title: &str,
    series: Vec<Series>,
) -> CliResult<PathBuf> {
    let coords = &ctx.sys.spec.coordinates;
    let svg = line_plot(title, &coords[axes.0], &coords[axes.1], &series);
    write_text(&ctx.path(suffix), &svg)
}

fn projected(tr: &Trajectory, (a, b): (usize, usize)) -> Vec<(f64, f64)> {
    tr.states.iter().map(|s| (s.q[a], s.q[b])).collect()
}

fn simulate(ctx: &Ctx, kind: &str, plot: Option<&str>) -> CliResult<Outcome> {
    let kind = config::spray_kind(kind)?;
    let axes = config::projection(&ctx.sys, plot)?;
    let state = config::initial_state(ctx.common, &ctx.sys)?;
    let ghat = config::load_metric(ctx.common, &ctx.sys)?;
    let target = match (kind, &ghat) {
        (SprayKind::GeodesicOfExtension, Some(g)) => g,
        (SprayKind::GeodesicOfExtension, None) => {
            return Err(CliError::args("geodesic_of_extension needs --metric-file"))
        }
        _ => &ctx.sys,
    };
    let tr = integrate(target, kind, &state, ctx.common.t_end, ctx.common.dt)?;
    let mut artifacts = vec![write_trajectory_csv(
        &ctx.path(&format!("simulate_{}.csv", kind.name())),
        &ctx.sys,
        &tr,
    )?];
    if let Some(axes) = axes {
        artifacts.push(plot_svg(
            ctx,
            &format!("simulate_{}.svg", kind.name()),
            axes,
            &format!("{} ({})", ctx.sys.spec.name, kind.name()),
            vec![Series::new(kind.name(), projected(&tr, axes), "black", 2.0)],
        )?);
    }
    let mut report = ctx.header();
    report["simulation"] = json!({
        "kind": kind,
        "t_end": ctx.common.t_end,
        "dt": ctx.common.dt,
        "steps": tr.states.len() - 1,
        "initial": state,
        "final": tr.last(),
        "energy_drift": tr.energy_drift(),
        "max_constraint_drift": tr.max_constraint_drift(),
    });
    ctx.finish(report, true, format!("integrated {}", kind.name()), artifacts)
}

fn compare_cmd(
    ctx: &Ctx,
    perturb: f64,
    perturb_coords: &[String],
    plot: Option<&str>,
) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let ghat = config::load_metric(ctx.common, sys)?
        .ok_or_else(|| CliError::args("compare needs --metric-file"))?;
    let axes = config::projection(sys, plot)?;
    let state = config::initial_state(ctx.common, sys)?;
    let (t_end, dt) = (ctx.common.t_end, ctx.common.dt);
    let cmp = compare(sys, &ghat, &state.q, &state.v, t_end, dt)?;

    let coords = &sys.spec.coordinates;
    let selected: Vec<usize> = if perturb_coords.is_empty() {
        (0..sys.n()).collect()
    } else {
        perturb_coords
            .iter()
            .map(|c| {
                coords
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| CliError::args(format!("--perturb-coords: unknown `{c}`")))
            })
            .collect::<CliResult<_>>()?
    };
    let qdot = sys.quasi_to_coord(&state)?;
    let mut perturbed = Vec::new();
    for eps in [perturb, -perturb] {
        let mut qd = qdot.clone();
        for &i in &selected {
            qd[i] += eps;
        }
        let v = sys.coord_to_quasi(&state.q, &qd)?;
        let tr = integrate(
            &ghat,
            SprayKind::GeodesicOfExtension,
            &QuasiState::new(state.q.clone(), v),
            t_end,
            dt,
        )?;
        let dev = cmp
            .nonholonomic
            .states
            .iter()
            .zip(&tr.states)
            .fold(0.0_f64, |m, (a, b)| m.max(max_diff(&a.q, &b.q)));
        perturbed.push((eps, tr, dev));
    }

    let mut artifacts = vec![
        write_trajectory_csv(&ctx.path("compare_nonholonomic.csv"), sys, &cmp.nonholonomic)?,
        write_trajectory_csv(&ctx.path("compare_geodesic.csv"), sys, &cmp.geodesic)?,
    ];
    let axes = axes.unwrap_or((0, 1.min(sys.n() - 1)));
    if plot.is_some() {
        let mut series = vec![
            Series::new("nonholonomic", projected(&cmp.nonholonomic, axes), "black", 3.0),
            Series::new("geodesic of ĝ", projected(&cmp.geodesic, axes), "#d62728", 1.5),
        ];
        for (eps, tr, _) in &perturbed {
            series.push(Series::new(
                &format!("ε = {eps}"),
                projected(tr, axes),
                if *eps > 0.0 { "#1f77b4" } else { "#2ca02c" },
                1.0,
            ));
        }
        artifacts.push(plot_svg(
            ctx,
            "compare.svg",
            axes,
            &format!("{}: nonholonomic vs geodesic", sys.spec.name),
            series,
        )?);
    }
    let pass = cmp.max_configuration_deviation < ctx.tols.trajectory;
    let mut report = ctx.header();
    report["comparison"] = json!({
        "initial": state,
        "t_end": t_end,
        "dt": dt,
        "max_configuration_deviation": cmp.max_configuration_deviation,
        "max_velocity_deviation": cmp.max_velocity_deviation,
        "perturbations": perturbed.iter().map(|(eps, tr, dev)| json!({
            "epsilon": eps,
            "coordinates": selected.iter().map(|&i| coords[i].clone()).collect::<Vec<_>>(),
            "max_configuration_deviation": dev,
            "final": tr.last(),
        })).collect::<Vec<_>>(),
    });
    let verdict = if pass {
        "nonholonomic trajectory is a geodesic of ĝ".to_string()
    } else {
        format!(
            "trajectory deviation {:.3e} exceeds {:.1e}",
            cmp.max_configuration_deviation, ctx.tols.trajectory
        )
    };
    ctx.finish(report, pass, verdict, artifacts)
}

fn gauss(ctx: &Ctx) -> CliResult<Outcome> {
    let sys = &ctx.sys;
    let common = ctx.common;
    let mut report = ctx.header();
    let ghat = match config::load_metric(common, sys)? {
        Some(g) => {
            report["metric"] = json!({ "source": "file" });
            g
        }
        None => {
            let basis = load_ansatz(ctx)?.unwrap_or_else(|| Ansatz::default_for(&sys.spec));
            let states = ctx.states();
            let fit = fit_ansatz(sys, Mode::Standard, &basis, &states, common.depth, ctx.tols.feas)?;
            let completed =
                complete_metric(sys, &fit.candidate_block(), Completion::default(), &ctx.points())?;
            report["metric"] = json!({
                "source": "fitted candidate",
                "feasible": fit.report.feasible,
                "off_block": shown(&fit.candidate_block()),
                "completion": completed.policy,
            });
            completed.system
        }
    };
    let mut states = vec![config::initial_state(common, sys)?];
    states.extend(sample_states(sys, CHECK_STATES, common.seed));
    let w = harmonic(sys.k());
    let u = harmonic(sys.m());
    let speed = CertifyOptions::default().gauss_a_speed;
    let mut b_worst = (0.0_f64, None);
    let mut a_worst = (0.0_f64, None);
    for st in &states {
        let va = &st.v[..sys.m()];
        let b = gauss_check_b(sys, &ghat, &st.q, va, &w, common.t_end, common.dt)?;
        if b > b_worst.0 || b_worst.1.is_none() {
            b_worst = (b_worst.0.max(b), Some(st.clone()));
        }
        let norm = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let vs: Vec<f64> = va.iter().map(|x| x * speed / norm).collect();
            let a = gauss_check_a(sys, &ghat, &st.q, &vs, &u, common.dt)?.abs();
            if a > a_worst.0 || a_worst.1.is_none() {
                a_worst = (a_worst.0.max(a), Some(st.clone()));
            }
        }
    }
    let b_ok = b_worst.0 < ctx.tols.gauss_b;
    let a_ok = a_worst.0 < ctx.tols.gauss_a;
    report["gauss"] = json!({
        "w": w,
        "u": u,
        "b": { "max_drift": b_worst.0, "pass": b_ok, "witness": if b_ok { None } else { b_worst.1 } },
        "a": {
            "max_abs": a_worst.0,
            "speed": speed,
            "label": if a_ok { "holds" } else { "violated" },
            "witness": if a_ok { None } else { a_worst.1 },
        },
    });
    let verdict = if b_ok {
        "Gauss-type condition (B) holds".to_string()
    } else {
        format!("Gauss-type condition (B) violated: drift {:.3e}", b_worst.0)
    };
    ctx.finish(report, b_ok, verdict, Vec::new())
}
