use crate::error::{Error, Result};
use crate::expr::{Dual, Expression, Scalar, Tape};
use crate::linalg::Mat;

use super::sample::halton_points;
use super::spec::{IjPolicy, MetricCheck, MetricSpec, QuasiState, SystemSpec};

pub const TOL_ORTHO: f64 = 1e-12;
pub const PD_MARGIN: f64 = 1e-10;
pub const MAX_CONDITION: f64 = 1e12;
pub const CHAPLYGIN_TOL: f64 = 1e-9;
pub const DEFAULT_SAMPLES: usize = 64;

/// Dense `n×n×n` table indexed `[upper][lower1][lower2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table3<T> {
    pub n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Table3<T> {
    pub fn zeros(n: usize) -> Self {
        Table3 {
            n,
            data: vec![T::zero(); n * n * n],
        }
    }

    #[inline]
    pub fn get(&self, g: usize, a: usize, b: usize) -> T {
        self.data[(g * self.n + a) * self.n + b]
    }

    #[inline]
    pub fn set(&mut self, g: usize, a: usize, b: usize, x: T) {
        self.data[(g * self.n + a) * self.n + b] = x;
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Table3<U> {
        Table3 {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.re().abs()))
    }

    /// `−T^γ_{αβ} v^α v^β`, the quadratic spray of a connection table.
    pub fn spray(&self, v: &[T]) -> Vec<T> {
        let n = self.n;
        (0..n)
            .map(|g| {
                let mut s = T::zero();
                for a in 0..n {
                    if v[a] == T::zero() {
                        continue;
                    }
                    let mut inner = T::zero();
                    for b in 0..n {
                        inner += self.get(g, a, b) * v[b];
                    }
                    s += inner * v[a];
                }
                -s
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
enum CompiledMetric {
    Coordinate(Tape),
    Frame(Tape),
    Extension {
        base: Box<CompiledMetric>,
        off: Tape,
        ij: IjPolicy,
    },
}

/// Per-point frame data: frame matrix and inverse, bracket coefficients,
/// frame metric and its frame derivatives `dg[γ] = X_γ(g)`.
#[derive(Clone, Debug)]
pub struct FrameGeometry<T> {
    pub a: Mat<T>,
    pub a_inv: Mat<T>,
    pub r: Table3<T>,
    pub g: Mat<T>,
    pub dg: Vec<Mat<T>>,
}

impl<T: Scalar> FrameGeometry<T> {
    /// Adapted-frame correction `K^a_i = −g^{ab} g_{bi}` (m×k).
    pub fn correction(&self, m: usize) -> Option<Mat<T>> {
        let n = self.g.rows;
        let gab = self.g.block(0, 0, m, m);
        let gai = self.g.block(0, m, m, n - m);
        gab.solve(&gai).map(|x| x.map(|v| -v))
    }
}

/// A validated system with all expressions bound to the coordinate order.
#[derive(Clone, Debug)]
pub struct System {
    pub spec: SystemSpec,
    n: usize,
    m: usize,
    /// Row-major `A^α_β`.
    frame: Tape,
    metric: CompiledMetric,
    generators: Option<Tape>,
    ranges: Vec<(f64, f64)>,
}

fn bind_matrix(rows: &[Vec<Expression>], spec: &SystemSpec, what: &str) -> Result<Tape> {
    let n = spec.n();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::validation(
            "shape",
            format!("{what} must be {n}x{n}"),
        ));
    }
    Tape::bind(rows.iter().flatten(), &spec.coordinates, &spec.parameters)
}

fn bind_metric(metric: &MetricSpec, spec: &SystemSpec) -> Result<CompiledMetric> {
    Ok(match metric {
        MetricSpec::Coordinate { entries } => {
            CompiledMetric::Coordinate(bind_matrix(entries, spec, "metric")?)
        }
        MetricSpec::Frame { entries } => {
            CompiledMetric::Frame(bind_matrix(entries, spec, "metric")?)
        }
        MetricSpec::Extension { base, off, ij } => {
            let (m, k) = (spec.m(), spec.k());
            if off.len() != m || off.iter().any(|r| r.len() != k) {
                return Err(Error::validation(
                    "shape",
                    format!("off-diagonal block must be {m}x{k}"),
                ));
            }
            CompiledMetric::Extension {
                base: Box::new(bind_metric(base, spec)?),
                off: Tape::bind(off.iter().flatten(), &spec.coordinates, &spec.parameters)?,
                ij: *ij,
            }
        }
    })
}

impl System {
    /// Binds and validates `spec` on `samples` points of its declared box.
    pub fn new(spec: SystemSpec) -> Result<System> {
        Self::with_samples(spec, DEFAULT_SAMPLES, 0)
    }

    pub fn with_samples(spec: SystemSpec, samples: usize, seed: u64) -> Result<System> {
        let sys = Self::bind(spec)?;
        sys.validate(&halton_points(&sys.ranges, samples, seed))?;
        Ok(sys)
    }

    /// Binds without sampling-based validation.
    pub fn bind(spec: SystemSpec) -> Result<System> {
        let n = spec.n();
        let m = spec.m();
        if n == 0 || m == 0 || m >= n {
            return Err(Error::validation(
                "rank",
                format!("need 1 <= m < n, got m = {m}, n = {n}"),
            ));
        }
        if spec.frame.len() != n || spec.frame.iter().any(|c| c.len() != n) {
            return Err(Error::validation("shape", format!("frame must be {n}x{n}")));
        }
        let frame = Tape::bind(
            (0..n * n).map(|i| &spec.frame[i % n][i / n]),
            &spec.coordinates,
            &spec.parameters,
        )?;
        let metric = bind_metric(&spec.metric, &spec)?;
        let generators = match &spec.chaplygin {
            None => None,
            Some(mk) => {
                if mk.generators.len() != n - m || mk.generators.iter().any(|g| g.len() != n) {
                    return Err(Error::validation(
                        "shape",
                        format!("chaplygin markup needs {} generators of length {n}", n - m),
                    ));
                }
                Some(Tape::bind(
                    mk.generators.iter().flatten(),
                    &spec.coordinates,
                    &spec.parameters,
                )?)
            }
        };
        for (c, r) in &spec.domain_box {
            if !spec.coordinates.contains(c) {
                return Err(Error::validation(
                    "domain_box",
                    format!("unknown coordinate `{c}`"),
                ));
            }
            if !(r[0] < r[1]) {
                return Err(Error::validation(
                    "domain_box",
                    format!("empty range for `{c}`"),
                ));
            }
        }
        let ranges = spec.box_ranges();
        Ok(System {
            spec,
            n,
            m,
            frame,
            metric,
            generators,
            ranges,
        })
    }

    pub fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        self.check_symmetric()?;
        for q in points {
            let a = self.frame_matrix(q.as_slice())?;
            let cond = a.condition_number();
            if !(cond < MAX_CONDITION) {
                return Err(Error::SingularFrame {
                    q: q.clone(),
                    condition_number: cond,
                });
            }
            let g = self.metric_with_frame(q.as_slice(), &a)?;
            let checked = match self.spec.metric_check {
                MetricCheck::PositiveDefinite => g.clone(),
                MetricCheck::ConstrainedBlock => g.block(0, 0, self.m, self.m),
            };
            let min = checked.sym_eigenvalues()[0];
            if !(min > PD_MARGIN) {
                return Err(Error::NotPositiveDefinite {
                    q: q.clone(),
                    min_eigenvalue: min,
                });
            }
        }
        if self.generators.is_some() {
            let res = self.chaplygin_bracket_residual(points)?;
            if !(res <= CHAPLYGIN_TOL) {
                return Err(Error::NotChaplygin { residual: res });
            }
        }
        Ok(())
    }

    fn check_symmetric(&self) -> Result<()> {
        fn walk(m: &MetricSpec) -> Option<(usize, usize)> {
            match m {
                MetricSpec::Coordinate { entries } | MetricSpec::Frame { entries } => {
                    for i in 0..entries.len() {
                        for j in 0..i {
                            if entries[i][j] != entries[j][i] {
                                return Some((i, j));
                            }
                        }
                    }
                    None
                }
                MetricSpec::Extension { base, .. } => walk(base),
            }
        }
        match walk(&self.spec.metric) {
            Some((i, j)) => Err(Error::validation(
                "symmetric metric",
                format!("entries ({i},{j}) and ({j},{i}) differ"),
            )),
            None => Ok(()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.n - self.m
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn has_chaplygin(&self) -> bool {
        self.generators.is_some()
    }

    pub fn in_box(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.ranges)
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Frame matrix `A^α_β(q)`.
    pub fn frame_matrix<T: Scalar>(&self, q: &[T]) -> Result<Mat<T>> {
        Ok(Mat::from_vec(self.n, self.n, self.frame.eval(q)?))
    }

    /// Frame metric `g_{αβ}(q) = g(X_α, X_β)`.
    pub fn frame_metric<T: Scalar>(&self, q: &[T]) -> Result<Mat<T>> {
        let a = self.frame_matrix(q)?;
        self.metric_with_frame(q, &a)
    }

    pub(crate) fn metric_with_frame<T: Scalar>(&self, q: &[T], a: &Mat<T>) -> Result<Mat<T>> {
        eval_metric(&self.metric, self.n, self.m, q, a)
    }

    /// Coordinate vector field of Chaplygin generator `i` at `q`.
    pub fn generator<T: Scalar>(&self, i: usize, q: &[T]) -> Option<Result<Vec<T>>> {
        let gens = self.generators.as_ref()?;
        let n = self.n;
        Some(gens.eval(q).map(|v| v[i * n..(i + 1) * n].to_vec()))
    }

    /// `G_{ai} = g(X_a, (E_i)_Q)`, an `m×k` matrix.
    pub fn chaplygin_g<T: Scalar>(&self, q: &[T]) -> Result<Mat<T>> {
        let (n, m, k) = (self.n, self.m, self.k());
        if self.generators.is_none() {
            return Err(Error::validation(
                "chaplygin",
                "system has no chaplygin markup",
            ));
        }
        let a = self.frame_matrix(q)?;
        let a_inv = a.inverse().ok_or_else(|| self.singular(q))?;
        let g = self.metric_with_frame(q, &a)?;
        let mut out = Mat::zeros(m, k);
        for i in 0..k {
            let e = self.generator(i, q).unwrap()?;
            let e_frame = a_inv.mul_vec(&e);
            for aa in 0..m {
                let mut s = T::zero();
                for b in 0..n {
                    s += g[(aa, b)] * e_frame[b];
                }
                out[(aa, i)] = s;
            }
        }
        Ok(out)
    }

    /// Max over `points` of the coordinate components of `[X_a, (E_i)_Q]`.
    pub fn chaplygin_bracket_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let (n, m, k) = (self.n, self.m, self.k());
        let mut worst: f64 = 0.0;
        for q in points {
            let a = self.frame_matrix(q.as_slice())?;
            for aa in 0..m {
                let xa = a.column(aa);
                for i in 0..k {
                    let ei = self.generator(i, q.as_slice()).unwrap()?;
                    // X_a(E_i) − E_i(X_a)
                    let qd = Dual::seed(q, &xa);
                    let e_d = self.generator(i, &qd).unwrap()?;
                    let qe = Dual::seed(q, &ei);
                    let a_d = self.frame_matrix(&qe)?;
                    for al in 0..n {
                        let v = e_d[al].eps - a_d[(al, aa)].eps;
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    fn singular<T: Scalar>(&self, q: &[T]) -> Error {
        let qr: Vec<f64> = q.iter().map(|x| x.re()).collect();
        let cond = self
            .frame_matrix(qr.as_slice())
            .map(|a| a.condition_number())
            .unwrap_or(f64::INFINITY);
        Error::SingularFrame {
            q: qr,
            condition_number: cond,
        }
    }

    /// Full per-point frame data; works for any scalar so flow derivatives
    /// of bracket and metric data come out of the same code.
    pub fn geometry<T: Scalar>(&self, q: &[T]) -> Result<FrameGeometry<T>> {
        let n = self.n;
        let a = self.frame_matrix(q)?;
        let a_inv = a.inverse().ok_or_else(|| self.singular(q))?;
        let mut da = Vec::with_capacity(n);
        let mut dg = Vec::with_capacity(n);
        let mut g = None;
        for gam in 0..n {
            let qd = Dual::seed(q, &a.column(gam));
            let ad = self.frame_matrix(&qd)?;
            let gd = self.metric_with_frame(&qd, &ad)?;
            if g.is_none() {
                g = Some(gd.map(|x: Dual<T>| x.re));
            }
            da.push(ad.map(|x: Dual<T>| x.eps));
            dg.push(gd.map(|x: Dual<T>| x.eps));
        }
        let g = g.unwrap();
        let mut r = Table3::zeros(n);
        for al in 0..n {
            for be in al + 1..n {
                // coordinate bracket [X_α, X_β]^μ
                let br: Vec<T> = (0..n)
                    .map(|mu| da[al][(mu, be)] - da[be][(mu, al)])
                    .collect();
                let fr = a_inv.mul_vec(&br);
                for gam in 0..n {
                    r.set(gam, al, be, fr[gam]);
                    r.set(gam, be, al, -fr[gam]);
                }
            }
        }
        Ok(FrameGeometry { a, a_inv, r, g, dg })
    }

    /// Bracket coefficients `R^γ_{αβ}(q)`.
    pub fn bracket_coeffs(&self, q: &[f64]) -> Result<Table3<f64>> {
        Ok(self.geometry(q)?.r)
    }

    /// `q̇ = A(q) v`.
    pub fn quasi_to_coord(&self, state: &QuasiState) -> Result<Vec<f64>> {
        Ok(self.frame_matrix(state.q.as_slice())?.mul_vec(&state.v))
    }

    /// `v = A(q)⁻¹ q̇`.
    pub fn coord_to_quasi(&self, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>> {
        let a = self.frame_matrix(q)?;
        let inv = a.inverse().ok_or_else(|| self.singular(q))?;
        Ok(inv.mul_vec(qdot))
    }

    /// `|g_ai|` max over the given points.
    pub fn max_off_block(&self, points: &[Vec<f64>]) -> Result<f64> {
        let (n, m) = (self.n, self.m);
        let mut worst: f64 = 0.0;
        for q in points {
            let g = self.frame_metric(q.as_slice())?;
            for a in 0..m {
                for i in m..n {
                    worst = worst.max(g[(a, i)].abs());
                }
            }
        }
        Ok(worst)
    }

    /// Largest metric eigenvalue over `points`; used to nondimensionalize
    /// residuals.
    pub fn metric_scale(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut s: f64 = 0.0;
        for q in points {
            let g = self.frame_metric(q.as_slice())?;
            s = s.max(*g.sym_eigenvalues().last().unwrap());
        }
        Ok(s.max(f64::MIN_POSITIVE))
    }
}

fn eval_metric<T: Scalar>(
    metric: &CompiledMetric,
    n: usize,
    m: usize,
    q: &[T],
    a: &Mat<T>,
) -> Result<Mat<T>> {
    match metric {
        CompiledMetric::Frame(entries) => Ok(Mat::from_vec(n, n, entries.eval(q)?)),
        CompiledMetric::Coordinate(entries) => {
            let cg = Mat::from_vec(n, n, entries.eval(q)?);
            Ok(a.transpose().mul(&cg).mul(a))
        }
        CompiledMetric::Extension { base, off, ij } => {
            let mut g = eval_metric(base, n, m, q, a)?;
            let k = n - m;
            let off = off.eval(q)?;
            for aa in 0..m {
                for i in 0..k {
                    let v = off[aa * k + i];
                    g[(aa, m + i)] = v;
                    g[(m + i, aa)] = v;
                }
            }
            for i in m..n {
                for j in m..n {
                    g[(i, j)] = match ij {
                        IjPolicy::Alpha(alpha) => {
                            if i == j {
                                T::cst(*alpha)
                            } else {
                                T::zero()
                            }
                        }
                        IjPolicy::Beta(beta) => g[(i, j)].scale(*beta),
                    };
                }
            }
            Ok(g)
        }
    }
}
