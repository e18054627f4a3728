//! Pointwise and ansatz-based solves for the off-diagonal block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::conditions::{b_row_data, level, level_name, Mode};
use crate::error::{Error, Result};
use crate::expr::{parse, Dual, Expression, Tape};
use crate::geometry::{halton_points, random_vectors, QuasiState, System, SystemSpec};
use crate::linalg::lstsq;

/// Feasibility threshold on residuals divided by the metric scale.
pub const TOL_FEAS: f64 = 1e-8;
/// Relative singular-value cutoff of the least-squares solves.
pub const RANK_TOL: f64 = 1e-10;
pub const DEFAULT_DEPTH: usize = 2;

/// Basis expressions per off-diagonal slot, `slots[a][i][r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ansatz {
    pub slots: Vec<Vec<Vec<Expression>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnsatzFile {
    Uniform { basis: Vec<Expression> },
    Slots { slots: Vec<Vec<Vec<Expression>>> },
    Bare(Vec<Vec<Vec<Expression>>>),
}

impl Ansatz {
    pub fn uniform(m: usize, k: usize, basis: &[Expression]) -> Ansatz {
        Ansatz {
            slots: vec![vec![basis.to_vec(); k]; m],
        }
    }

    pub fn parse_uniform(m: usize, k: usize, basis: &[&str]) -> Result<Ansatz> {
        let b = basis.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        Ok(Ansatz::uniform(m, k, &b))
    }

    /// Accepts `{"basis": [...]}` (same list for every slot),
    /// `{"slots": [[[...]]]}` or a bare `m×k` nested list.
    pub fn from_json(text: &str, m: usize, k: usize) -> Result<Ansatz> {
        let file: AnsatzFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let a = match file {
            AnsatzFile::Uniform { basis } => Ansatz::uniform(m, k, &basis),
            AnsatzFile::Slots { slots } | AnsatzFile::Bare(slots) => Ansatz { slots },
        };
        if a.slots.len() != m || a.slots.iter().any(|r| r.len() != k) {
            return Err(Error::Parse(format!("ansatz must have {m}x{k} slots")));
        }
        Ok(a)
    }

    /// Built-in default: trigonometric in the disk angle, the carriage
    /// family, quadratic in `y` for the particle, and `{1, q, sin q, cos q}`
    /// otherwise.
    pub fn default_for(spec: &SystemSpec) -> Ansatz {
        let (m, k) = (spec.m(), spec.k());
        let p = |s: &str| parse(s).expect("default ansatz");
        match spec.name.as_str() {
            "disk" => Ansatz::uniform(m, k, &[p("cos(phi)"), p("sin(phi)"), p("1")]),
            "particle" => Ansatz::uniform(m, k, &[p("1"), p("y"), p("y^2")]),
            "carriage" if k == 3 => {
                let trig = vec![p("cos(theta)"), p("sin(theta)")];
                let rot = [
                    "1",
                    "x*cos(theta)",
                    "x*sin(theta)",
                    "y*cos(theta)",
                    "y*sin(theta)",
                ]
                .map(p)
                .to_vec();
                Ansatz {
                    slots: vec![vec![trig.clone(), trig, rot]; m],
                }
            }
            _ => {
                let mut basis = vec![Expression::num(1.0)];
                for c in &spec.coordinates {
                    basis.push(Expression::var(c));
                    basis.push(p(&format!("sin({c})")));
                    basis.push(p(&format!("cos({c})")));
                }
                Ansatz::uniform(m, k, &basis)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.slots.iter().flatten().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(a, i, basis)` per coefficient, in coefficient order.
    fn columns(&self) -> Vec<(usize, usize, &Expression)> {
        let mut out = Vec::new();
        for (a, row) in self.slots.iter().enumerate() {
            for (i, slot) in row.iter().enumerate() {
                for e in slot {
                    out.push((a, i, e));
                }
            }
        }
        out
    }

    /// `Σ_r c_r φ_r` per slot; coefficients below `drop` in magnitude are
    /// omitted.
    pub fn expressions(&self, coeffs: &[f64], drop: f64) -> Vec<Vec<Expression>> {
        let mut it = coeffs.iter();
        self.slots
            .iter()
            .map(|row| {
                row.iter()
                    .map(|slot| {
                        Expression::sum(slot.iter().filter_map(|e| {
                            let c = *it.next().unwrap();
                            (c.abs() > drop).then(|| Expression::mul(Expression::num(c), e.clone()))
                        }))
                    })
                    .collect()
            })
            .collect()
    }
}

/// On-constraint sample states: Halton points of the box and uniform
/// `v^a ∈ [−1, 1]^m`.
pub fn sample_states(sys: &System, count: usize, seed: u64) -> Vec<QuasiState> {
    let qs = halton_points(sys.ranges(), count, seed);
    let vs = random_vectors(sys.m(), count, seed.wrapping_add(1));
    qs.into_iter()
        .zip(vs)
        .map(|(q, v)| QuasiState::on_constraint(q, &v, sys.n()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionResidual {
    pub condition: String,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub pass: bool,
    /// State with the largest residual when the condition fails.
    pub witness: Option<QuasiState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub mode: Mode,
    pub depth: usize,
    pub samples: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub nullity: usize,
    /// Minimum-norm solution of the algebraic levels.
    pub particular: Vec<f64>,
    pub nullspace: Vec<Vec<f64>>,
    /// Max residual of the algebraic levels at `particular`.
    pub algebraic_residual: f64,
    pub conditions: Vec<ConditionResidual>,
    pub metric_scale: f64,
    pub tol_feas: f64,
    pub feasible: bool,
}

impl ConditionReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionResidual> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Largest metric eigenvalue over the default sample of the box.
pub fn box_metric_scale(sys: &System) -> Result<f64> {
    sys.metric_scale(&halton_points(
        sys.ranges(),
        crate::geometry::DEFAULT_SAMPLES,
        0,
    ))
}

/// Rows grouped by condition name, with the state index of each row.
struct Rows {
    names: Vec<String>,
    group: Vec<usize>,
    state: Vec<usize>,
    data: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Rows {
    fn new() -> Rows {
        Rows {
            names: Vec::new(),
            group: Vec::new(),
            state: Vec::new(),
            data: Vec::new(),
            rhs: Vec::new(),
        }
    }

    fn group_id(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    fn push(&mut self, group: usize, state: usize, row: Vec<f64>, rhs: f64) {
        self.group.push(group);
        self.state.push(state);
        self.data.push(row);
        self.rhs.push(rhs);
    }

    fn matrix(&self, cols: usize) -> (DMatrix<f64>, DVector<f64>) {
        let a = DMatrix::from_fn(self.data.len(), cols, |i, j| self.data[i][j]);
        (a, DVector::from_vec(self.rhs.clone()))
    }

    fn residuals(
        &self,
        x: &[f64],
        states: &[QuasiState],
        scale: f64,
        tol: f64,
        out: &mut Vec<ConditionResidual>,
    ) {
        for (g, name) in self.names.iter().enumerate() {
            let mut max: f64 = 0.0;
            let mut sum = 0.0;
            let mut count = 0;
            let mut witness = None;
            for r in 0..self.data.len() {
                if self.group[r] != g {
                    continue;
                }
                let v = (self.data[r].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.rhs[r])
                    .abs();
                sum += v;
                count += 1;
                if v > max || witness.is_none() {
                    max = max.max(v);
                    witness = Some(self.state[r]);
                }
            }
            let pass = max / scale < tol;
            out.push(ConditionResidual {
                condition: name.clone(),
                max_abs: max,
                mean_abs: if count > 0 { sum / count as f64 } else { 0.0 },
                pass,
                witness: if pass {
                    None
                } else {
                    witness.map(|i| states[i].clone())
                },
            });
        }
    }
}

/// Solves the algebraic levels `1..=depth` for the `m·k` values `ĝ_ai(q)`
/// (row-major) at a single point from several velocities.
pub fn solve_pointwise(
    sys: &System,
    mode: Mode,
    q: &[f64],
    velocities: &[Vec<f64>],
    depth: usize,
) -> Result<ConditionReport> {
    let (m, k) = (sys.m(), sys.k());
    let cols = m * k;
    let mut rows = Rows::new();
    let states: Vec<QuasiState> = velocities
        .iter()
        .map(|v| QuasiState::on_constraint(q.to_vec(), v, sys.n()))
        .collect();
    for (s, va) in velocities.iter().enumerate() {
        for d in 1..=depth {
            let g = rows.group_id(&level_name(d));
            let (mm, r) = level(sys, mode, d, q, va)?;
            for c in 0..m {
                let mut row = vec![0.0; cols];
                for b in 0..m {
                    for kk in 0..k {
                        row[b * k + kk] = mm[(c, kk)] * va[b];
                    }
                }
                rows.push(g, s, row, r[c]);
            }
        }
    }
    let (a, b) = rows.matrix(cols);
    let sol = lstsq(&a, &b, RANK_TOL);
    let scale = sys.metric_scale(&[q.to_vec()])?;
    let mut conditions = Vec::new();
    rows.residuals(&sol.x, &states, scale, TOL_FEAS, &mut conditions);
    let feasible = conditions.iter().all(|c| c.pass);
    Ok(ConditionReport {
        mode,
        depth,
        samples: velocities.len(),
        unknowns: cols,
        rank: sol.rank,
        nullity: cols - sol.rank,
        particular: sol.x,
        nullspace: sol.nullspace,
        algebraic_residual: sol.residual,
        conditions,
        metric_scale: scale,
        tol_feas: TOL_FEAS,
        feasible,
    })
}

/// Solve of condition (A) alone on the ansatz coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraicSummary {
    pub rank: usize,
    pub nullity: usize,
    /// Largest `|c|` of the minimum-norm solution.
    pub particular_max_abs: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub a_only: AlgebraicSummary,
    /// Minimum-norm solution of the algebraic levels alone.
    pub algebraic_candidate: Vec<f64>,
    pub report: ConditionReport,
    #[serde(skip)]
    pub ansatz: Ansatz,
}

impl FitResult {
    /// Fitted off-diagonal block; coefficients below `1e-13` relative to the
    /// largest are dropped.
    pub fn off_block(&self) -> Vec<Vec<Expression>> {
        let big = self
            .coefficients
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()));
        self.ansatz.expressions(&self.coefficients, 1e-13 * big)
    }

    pub fn candidate_block(&self) -> Vec<Vec<Expression>> {
        let big = self
            .algebraic_candidate
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()));
        self.ansatz
            .expressions(&self.algebraic_candidate, 1e-13 * big)
    }
}

fn name_of_b(mode: Mode) -> &'static str {
    match mode {
        Mode::Standard => "B",
        Mode::Chaplygin => "first_integral",
    }
}

/// Two-stage fit of the ansatz coefficients: the algebraic levels give a
/// particular solution plus nullspace, then the (B) residual is minimized
/// over that affine family. Feasible iff every condition's max residual,
/// divided by the metric scale, is below `tol`.
pub fn fit_ansatz(
    sys: &System,
    mode: Mode,
    ansatz: &Ansatz,
    states: &[QuasiState],
    depth: usize,
    tol: f64,
) -> Result<FitResult> {
    let (m, k) = (sys.m(), sys.k());
    if ansatz.slots.len() != m || ansatz.slots.iter().any(|r| r.len() != k) {
        return Err(Error::Precondition(format!(
            "ansatz must have {m}x{k} slots"
        )));
    }
    let columns = ansatz.columns();
    let cols = columns.len();
    let spec = &sys.spec;
    let basis = Tape::bind(
        columns.iter().map(|(_, _, e)| *e),
        &spec.coordinates,
        &spec.parameters,
    )?;

    let mut alg = Rows::new();
    let mut pde = Rows::new();
    let b_group = pde.group_id(name_of_b(mode));
    for (s, st) in states.iter().enumerate() {
        let q = st.q.as_slice();
        let va = &st.v[..m];
        let phi: Vec<f64> = basis.eval(q)?;
        for d in 1..=depth {
            let g = alg.group_id(&level_name(d));
            let (mm, r) = level(sys, mode, d, q, va)?;
            for c in 0..m {
                let row = columns
                    .iter()
                    .enumerate()
                    .map(|(j, (b, kk, _))| phi[j] * mm[(c, *kk)] * va[*b])
                    .collect();
                alg.push(g, s, row, r[c]);
            }
        }
        let bd = b_row_data(sys, q, va)?;
        let qd = Dual::seed(q, &bd.dir);
        let dphi: Vec<f64> = basis.eval(&qd)?.iter().map(|x| x.eps).collect();
        for i in 0..k {
            let row = columns
                .iter()
                .enumerate()
                .map(|(j, (b, kk, _))| {
                    let mut x = 0.0;
                    if *kk == i {
                        x += dphi[j] * va[*b] + phi[j] * bd.f[*b];
                    }
                    if mode == Mode::Standard {
                        x += phi[j] * va[*b] * bd.st[(i, *kk)];
                    }
                    x
                })
                .collect();
            let rhs = match mode {
                Mode::Standard => -bd.lambda[i],
                Mode::Chaplygin => 0.0,
            };
            pde.push(b_group, s, row, rhs);
        }
    }

    let (a1, r1) = alg.matrix(cols);
    let sol1 = lstsq(&a1, &r1, RANK_TOL);
    let a_rows: Vec<usize> = (0..alg.data.len()).filter(|r| alg.group[*r] == 0).collect();
    let a_only = {
        let a = DMatrix::from_fn(a_rows.len(), cols, |i, j| alg.data[a_rows[i]][j]);
        let b = DVector::from_fn(a_rows.len(), |i, _| alg.rhs[a_rows[i]]);
        let s = lstsq(&a, &b, RANK_TOL);
        AlgebraicSummary {
            rank: s.rank,
            nullity: cols - s.rank,
            particular_max_abs: s.x.iter().fold(0.0, |m, x| m.max(x.abs())),
            residual: s.residual,
        }
    };
    let c0 = DVector::from_vec(sol1.x.clone());
    let (l, rhs2) = pde.matrix(cols);
    let coeffs = if sol1.nullspace.is_empty() {
        c0.clone()
    } else {
        let p = sol1.nullspace.len();
        let nmat = DMatrix::from_fn(cols, p, |i, j| sol1.nullspace[j][i]);
        let ln = &l * &nmat;
        let target = &rhs2 - &l * &c0;
        let z = lstsq(&ln, &target, RANK_TOL);
        &c0 + &nmat * DVector::from_vec(z.x)
    };
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();

    let scale = box_metric_scale(sys)?;
    let mut conditions = Vec::new();
    alg.residuals(&coeffs, states, scale, tol, &mut conditions);
    pde.residuals(&coeffs, states, scale, tol, &mut conditions);
    let feasible = conditions.iter().all(|c| c.pass);
    Ok(FitResult {
        coefficients: coeffs,
        a_only,
        algebraic_candidate: sol1.x.clone(),
        report: ConditionReport {
            mode,
            depth,
            samples: states.len(),
            unknowns: cols,
            rank: sol1.rank,
            nullity: cols - sol1.rank,
            particular: sol1.x,
            nullspace: sol1.nullspace,
            algebraic_residual: sol1.residual,
            conditions,
            metric_scale: scale,
            tol_feas: tol,
            feasible,
        },
        ansatz: ansatz.clone(),
    })
}

/// Bisection on a sign change of `f` in `[lo, hi]` down to width `tol`.
pub fn bisect<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Precondition(format!(
            "no sign change on [{lo}, {hi}] ({flo:.3e}, {fhi:.3e})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
