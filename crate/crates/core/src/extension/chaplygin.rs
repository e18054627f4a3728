//! Chaplygin route: linear first integrals `μ_i = μ_ai v^a` of the
//! nonholonomic field in the frame whose complement is spanned by the
//! adapted symmetry generators, converted by `ĝ_ai = μ_ai − G_ai`.

use serde::Serialize;

use super::complete::{complete_metric, CompletedMetric, Completion};
use super::conditions::{Mode, OffBlock};
use super::fit::{fit_ansatz, sample_states, Ansatz, ConditionReport, DEFAULT_DEPTH, TOL_FEAS};
use crate::dynamics::SprayKind;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{
    halton_points, orthogonalize, symbolic_inner, MetricSpec, System, SystemSpec,
};
use crate::integrate::integrate;

/// Drift bound for the recovered first integrals over unit time.
pub const FIRST_INTEGRAL_TOL: f64 = 1e-8;

/// Frame `{X_a, X̃_i}` with `X̃_i` the generators adapted to `𝒟`.
pub fn chaplygin_frame(spec: &SystemSpec) -> Result<SystemSpec> {
    let markup = spec
        .chaplygin
        .as_ref()
        .ok_or_else(|| Error::Precondition("system has no chaplygin markup".into()))?;
    if !matches!(spec.metric, MetricSpec::Coordinate { .. }) {
        return Err(Error::Precondition(
            "chaplygin route needs a coordinate metric".into(),
        ));
    }
    let mut out = spec.clone();
    for (i, g) in markup.generators.iter().enumerate() {
        out.frame[spec.m() + i] = g.clone();
    }
    orthogonalize(&out)
}

/// `G_ai = g(X_a, (E_i)_Q)` as expressions.
pub fn symbolic_g(spec: &SystemSpec) -> Result<Vec<Vec<Expression>>> {
    let entries = match &spec.metric {
        MetricSpec::Coordinate { entries } => entries,
        _ => {
            return Err(Error::Precondition(
                "chaplygin route needs a coordinate metric".into(),
            ))
        }
    };
    let markup = spec
        .chaplygin
        .as_ref()
        .ok_or_else(|| Error::Precondition("system has no chaplygin markup".into()))?;
    Ok((0..spec.m())
        .map(|a| {
            markup
                .generators
                .iter()
                .map(|e| symbolic_inner(entries, &spec.frame[a], e))
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ChaplyginSolution {
    pub mu_coefficients: Vec<f64>,
    pub mu: Vec<Vec<Expression>>,
    /// `ĝ_ai` in the Chaplygin frame.
    pub off: Vec<Vec<Expression>>,
    pub report: ConditionReport,
    pub first_integral_drift: f64,
    pub completed: Option<CompletedMetric>,
    #[serde(skip)]
    pub frame: System,
}

#[derive(Clone, Debug)]
pub struct ChaplyginOptions {
    pub samples: usize,
    pub seed: u64,
    pub depth: usize,
    pub tol: f64,
    pub completion: Completion,
    /// Trajectories used for the first-integral drift check.
    pub trajectories: usize,
    pub dt: f64,
}

impl Default for ChaplyginOptions {
    fn default() -> Self {
        ChaplyginOptions {
            samples: 64,
            seed: 0,
            depth: DEFAULT_DEPTH,
            tol: TOL_FEAS,
            completion: Completion::default(),
            trajectories: 3,
            dt: 1e-3,
        }
    }
}

/// Solves for `μ_ai` in the ansatz (default: the system's default basis),
/// checks the first-integral property on integrated trajectories and
/// completes `ĝ` when feasible.
pub fn chaplygin_solve(
    spec: &SystemSpec,
    ansatz: Option<&Ansatz>,
    opts: &ChaplyginOptions,
) -> Result<ChaplyginSolution> {
    let frame_spec = chaplygin_frame(spec)?;
    let sys = System::new(frame_spec.clone())?;
    let ansatz = ansatz.cloned().unwrap_or_else(|| Ansatz::default_for(spec));
    let states = sample_states(&sys, opts.samples, opts.seed);
    let fit = fit_ansatz(
        &sys,
        Mode::Chaplygin,
        &ansatz,
        &states,
        opts.depth,
        opts.tol,
    )?;
    let mu = fit.off_block();
    let g = symbolic_g(&frame_spec)?;
    let off: Vec<Vec<Expression>> = mu
        .iter()
        .zip(&g)
        .map(|(mr, gr)| {
            mr.iter()
                .zip(gr)
                .map(|(u, gg)| Expression::sub(u.clone(), gg.clone()))
                .collect()
        })
        .collect();

    let mu_block = OffBlock::bind(&sys, &mu)?;
    let m = sys.m();
    let mut drift: f64 = 0.0;
    for st in states.iter().take(opts.trajectories) {
        let traj = integrate(&sys, SprayKind::Nonholonomic, st, 1.0, opts.dt)?;
        let mut first: Option<Vec<f64>> = None;
        for s in &traj.states {
            let b = mu_block.eval(s.q.as_slice())?;
            let val: Vec<f64> = (0..sys.k())
                .map(|i| (0..m).map(|a| b[(a, i)] * s.v[a]).sum())
                .collect();
            let f0 = first.get_or_insert_with(|| val.clone());
            for (x, y) in val.iter().zip(f0.iter()) {
                drift = drift.max((x - y).abs());
            }
        }
    }

    let completed = if fit.report.feasible && drift < FIRST_INTEGRAL_TOL {
        let points = halton_points(sys.ranges(), opts.samples, opts.seed);
        Some(complete_metric(&sys, &off, opts.completion, &points)?)
    } else {
        None
    };
    Ok(ChaplyginSolution {
        mu_coefficients: fit.coefficients.clone(),
        mu,
        off,
        report: fit.report,
        first_integral_drift: drift,
        completed,
        frame: sys,
    })
}
