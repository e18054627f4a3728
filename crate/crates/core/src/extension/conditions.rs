//! Conditions on the off-diagonal block `ĝ_ai` of a `𝒟`-preserving metric.
//!
//! With `θ_i = ĝ_ai v^a`:
//! - (A) `θ_k R^k_{ac} v^a = 0`
//! - (B) `Γ(θ_i) + θ_k R^k_{ia} v^a + λ_i = 0`, `Γ` the nonholonomic field
//! - (C), (C′), … : (A) differentiated along `Γ` with (B) substituted.
//!
//! Level `d` is stored as `M θ = r` with `M` of size `m×k`. Level 1 has
//! `M_{ck} = R^k_{ac} v^a`, `r = 0`, and
//! `M_{d+1} = Γ(M_d) − M_d S̃`, `r_{d+1} = Γ(r_d) + M_d λ` where
//! `S̃_{kj} = R^j_{ka} v^a`. In Chaplygin mode the unknowns are the
//! coefficients `μ_ai` of first integrals `μ_i = μ_ai v^a`; then
//! `r_1 = M_1 G v` and the recursion is plain `Γ`-differentiation.

use serde::{Deserialize, Serialize};

use crate::dynamics::on_constraint;
use crate::error::{Error, Result};
use crate::expr::{Dual, Expression, Scalar, Tape};
use crate::geometry::{FrameGeometry, System};
use crate::integrate::nh_step;
use crate::linalg::Mat;

/// Step of the flow micro-steps used once dual nesting runs out.
pub const FLOW_FD_STEP: f64 = 1e-5;
/// Deepest level computed exactly with nested duals.
pub const DUAL_DEPTH: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Standard,
    Chaplygin,
}

/// Name of level `d`: `A`, `C`, `C'`, `C''`, ...
pub fn level_name(d: usize) -> String {
    match d {
        1 => "A".into(),
        _ => format!("C{}", "'".repeat(d - 2)),
    }
}

/// Off-diagonal block as compiled expressions, `m×k`.
#[derive(Clone, Debug)]
pub struct OffBlock {
    m: usize,
    k: usize,
    entries: Tape,
}

impl OffBlock {
    pub fn bind(sys: &System, off: &[Vec<Expression>]) -> Result<OffBlock> {
        let (m, k) = (sys.m(), sys.k());
        if off.len() != m || off.iter().any(|r| r.len() != k) {
            return Err(Error::validation(
                "shape",
                format!("off-diagonal block must be {m}x{k}"),
            ));
        }
        let spec = &sys.spec;
        let entries = Tape::bind(off.iter().flatten(), &spec.coordinates, &spec.parameters)?;
        Ok(OffBlock { m, k, entries })
    }

    pub fn eval<T: Scalar>(&self, q: &[T]) -> Result<Mat<T>> {
        Ok(Mat::from_vec(self.m, self.k, self.entries.eval(q)?))
    }
}

/// `S_{ck} = R^k_{ac} v^a` (`m×k`).
fn s_matrix<T: Scalar>(geo: &FrameGeometry<T>, m: usize, va: &[T]) -> Mat<T> {
    let k = geo.g.rows - m;
    Mat::from_fn(m, k, |c, kk| {
        let mut s = T::zero();
        for a in 0..m {
            s += geo.r.get(m + kk, a, c) * va[a];
        }
        s
    })
}

/// `S̃_{kj} = R^j_{ka} v^a` (`k×k`).
fn s_tilde<T: Scalar>(geo: &FrameGeometry<T>, m: usize, va: &[T]) -> Mat<T> {
    let k = geo.g.rows - m;
    Mat::from_fn(k, k, |kk, j| {
        let mut s = T::zero();
        for a in 0..m {
            s += geo.r.get(m + j, m + kk, a) * va[a];
        }
        s
    })
}

/// One level of linear conditions `M θ = r` at an on-constraint state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearCondition {
    pub level: usize,
    pub name: String,
    /// `m×k`, rows indexed by the free index `c`.
    pub m: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl LinearCondition {
    fn new(level: usize, m: &Mat<f64>, r: Vec<f64>) -> Self {
        LinearCondition {
            level,
            name: level_name(level),
            m: (0..m.rows)
                .map(|c| (0..m.cols).map(|k| m[(c, k)]).collect())
                .collect(),
            r,
        }
    }

    /// `M θ − r` for `θ_k` given.
    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        self.m
            .iter()
            .zip(&self.r)
            .map(|(row, r)| row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - r)
            .collect()
    }
}

fn level1<T: Scalar>(sys: &System, mode: Mode, q: &[T], va: &[T]) -> Result<(Mat<T>, Vec<T>)> {
    let m = sys.m();
    let geo = sys.geometry(q)?;
    let s = s_matrix(&geo, m, va);
    let r = match mode {
        Mode::Standard => vec![T::zero(); m],
        Mode::Chaplygin => {
            let g = sys.chaplygin_g(q)?;
            let gv: Vec<T> = (0..sys.k())
                .map(|k| {
                    let mut x = T::zero();
                    for b in 0..m {
                        x += g[(b, k)] * va[b];
                    }
                    x
                })
                .collect();
            s.mul_vec(&gv)
        }
    };
    Ok((s, r))
}

/// Applies one `Γ`-derivative to level data; `d_m`, `d_r` are `Γ(M)`, `Γ(r)`.
fn next_level<T: Scalar>(
    mode: Mode,
    geo: &FrameGeometry<T>,
    lambda: &[T],
    m_prev: &Mat<T>,
    d_m: Mat<T>,
    d_r: Vec<T>,
    va: &[T],
) -> (Mat<T>, Vec<T>) {
    match mode {
        Mode::Chaplygin => (d_m, d_r),
        Mode::Standard => {
            let m = m_prev.rows;
            let st = s_tilde(geo, m, va);
            let ms = m_prev.mul(&st);
            let new_m = Mat::from_fn(d_m.rows, d_m.cols, |c, k| d_m[(c, k)] - ms[(c, k)]);
            let ml = m_prev.mul_vec(lambda);
            let new_r = d_r.iter().zip(&ml).map(|(a, b)| *a + *b).collect();
            (new_m, new_r)
        }
    }
}

fn level2<T: Scalar>(sys: &System, mode: Mode, q: &[T], va: &[T]) -> Result<(Mat<T>, Vec<T>)> {
    let n = sys.n();
    let oc = on_constraint(sys, q, va)?;
    let mut v = va.to_vec();
    v.resize(n, T::zero());
    let dir = oc.geo.a.mul_vec(&v);
    let qd: Vec<Dual<T>> = q.iter().zip(&dir).map(|(x, d)| Dual::new(*x, *d)).collect();
    let vd: Vec<Dual<T>> = va
        .iter()
        .zip(&oc.f)
        .map(|(x, d)| Dual::new(*x, *d))
        .collect();
    let (md, rd) = level1(sys, mode, &qd, &vd)?;
    let m1 = md.map(|x| x.re);
    let d_m = md.map(|x| x.eps);
    let d_r = rd.iter().map(|x| x.eps).collect();
    Ok(next_level(mode, &oc.geo, &oc.lambda, &m1, d_m, d_r, va))
}

/// Level-`d` data at `(q, v^a)`; levels above [`DUAL_DEPTH`] use central
/// differences along RK4 micro-steps of the nonholonomic flow.
pub fn level(
    sys: &System,
    mode: Mode,
    d: usize,
    q: &[f64],
    va: &[f64],
) -> Result<(Mat<f64>, Vec<f64>)> {
    match d {
        0 => Err(Error::Precondition("condition levels start at 1".into())),
        1 => level1(sys, mode, q, va),
        2 => level2(sys, mode, q, va),
        _ => {
            let h = FLOW_FD_STEP;
            let (m_prev, _) = level(sys, mode, d - 1, q, va)?;
            let (qp, vp) = nh_step(sys, q, va, h)?;
            let (qm, vm) = nh_step(sys, q, va, -h)?;
            let (mp, rp) = level(sys, mode, d - 1, &qp, &vp)?;
            let (mm, rm) = level(sys, mode, d - 1, &qm, &vm)?;
            let d_m = Mat::from_fn(mp.rows, mp.cols, |i, j| {
                (mp[(i, j)] - mm[(i, j)]) / (2.0 * h)
            });
            let d_r = rp
                .iter()
                .zip(&rm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let oc = on_constraint(sys, q, va)?;
            Ok(next_level(mode, &oc.geo, &oc.lambda, &m_prev, d_m, d_r, va))
        }
    }
}

/// Levels `1..=depth` of linear conditions on `θ` at `(q, v^a)`.
pub fn iterated_conditions(
    sys: &System,
    mode: Mode,
    depth: usize,
    q: &[f64],
    va: &[f64],
) -> Result<Vec<LinearCondition>> {
    (1..=depth)
        .map(|d| level(sys, mode, d, q, va).map(|(m, r)| LinearCondition::new(d, &m, r)))
        .collect()
}

/// A candidate off-diagonal block.
#[derive(Clone, Debug)]
pub enum ThetaCandidate {
    /// Values `ĝ_ai` (row-major, `m×k`) at a single point `q`.
    Pointwise { q: Vec<f64>, values: Vec<f64> },
    /// Expressions `ĝ_ai(q)`.
    Field(OffBlock),
}

impl ThetaCandidate {
    pub fn field(sys: &System, off: &[Vec<Expression>]) -> Result<ThetaCandidate> {
        Ok(ThetaCandidate::Field(OffBlock::bind(sys, off)?))
    }

    fn values(&self, sys: &System, q: &[f64]) -> Result<Mat<f64>> {
        match self {
            ThetaCandidate::Pointwise { q: at, values } => {
                if at.as_slice() != q {
                    return Err(Error::Precondition(
                        "pointwise candidate evaluated off its point".into(),
                    ));
                }
                let k = sys.k();
                Ok(Mat::from_fn(sys.m(), k, |a, i| values[a * k + i]))
            }
            ThetaCandidate::Field(f) => f.eval(q),
        }
    }

    /// `θ_k = ĝ_bk v^b`.
    pub fn theta(&self, sys: &System, q: &[f64], va: &[f64]) -> Result<Vec<f64>> {
        let g = self.values(sys, q)?;
        Ok(theta_of(&g, va))
    }
}

fn theta_of<T: Scalar>(g: &Mat<T>, va: &[T]) -> Vec<T> {
    (0..g.cols)
        .map(|k| {
            let mut s = T::zero();
            for b in 0..g.rows {
                s += g[(b, k)] * va[b];
            }
            s
        })
        .collect()
}

/// (A): `θ_k R^k_{ac} v^a` for each `c`.
pub fn condition_a_residual(
    sys: &System,
    cand: &ThetaCandidate,
    q: &[f64],
    va: &[f64],
) -> Result<Vec<f64>> {
    let theta = cand.theta(sys, q, va)?;
    let (s, _) = level1(sys, Mode::Standard, q, va)?;
    Ok(s.mul_vec(&theta))
}

/// (B): `Γ(θ_i) + θ_k R^k_{ia} v^a + λ_i` for each `i`, with
/// `Γ(θ_i) = X_a(ĝ_bi) v^a v^b + ĝ_bi f^b`. In Chaplygin mode the candidate
/// holds `μ_ai` and the residual is `Γ(μ_i)`.
pub fn condition_b_residual_mode(
    sys: &System,
    mode: Mode,
    cand: &ThetaCandidate,
    q: &[f64],
    va: &[f64],
) -> Result<Vec<f64>> {
    let field = match cand {
        ThetaCandidate::Pointwise { .. } => return Err(Error::StencilUnavailable),
        ThetaCandidate::Field(f) => f,
    };
    let (n, m, k) = (sys.n(), sys.m(), sys.k());
    let oc = on_constraint(sys, q, va)?;
    let mut v = va.to_vec();
    v.resize(n, 0.0);
    let dir = oc.geo.a.mul_vec(&v);
    let gd = field.eval(&Dual::seed(q, &dir))?;
    let g = gd.map(|x| x.re);
    let theta = theta_of(&g, va);
    let st = s_tilde(&oc.geo, m, va);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut s = 0.0;
        for b in 0..m {
            s += gd[(b, i)].eps * va[b] + g[(b, i)] * oc.f[b];
        }
        if mode == Mode::Standard {
            for kk in 0..k {
                s += theta[kk] * st[(i, kk)];
            }
            s += oc.lambda[i];
        }
        out.push(s);
    }
    Ok(out)
}

pub fn condition_b_residual(
    sys: &System,
    cand: &ThetaCandidate,
    q: &[f64],
    va: &[f64],
) -> Result<Vec<f64>> {
    condition_b_residual_mode(sys, Mode::Standard, cand, q, va)
}

/// Per-state data needed to assemble linear rows for (B): the candidate
/// enters as `Γ(θ_i) + θ_k S̃_{ik}`, the inhomogeneity is `λ_i`.
pub(crate) struct BRowData {
    pub dir: Vec<f64>,
    pub f: Vec<f64>,
    pub st: Mat<f64>,
    pub lambda: Vec<f64>,
}

pub(crate) fn b_row_data(sys: &System, q: &[f64], va: &[f64]) -> Result<BRowData> {
    let n = sys.n();
    let oc = on_constraint(sys, q, va)?;
    let mut v = va.to_vec();
    v.resize(n, 0.0);
    Ok(BRowData {
        dir: oc.geo.a.mul_vec(&v),
        st: s_tilde(&oc.geo, sys.m(), va),
        f: oc.f,
        lambda: oc.lambda,
    })
}
