//! Fixed-step RK4 integration in quasi-velocities, trajectory comparison,
//! the nonholonomic exponential map and the Gauss-type checks.

use serde::Serialize;

use crate::connection::{raise, ConnectionKind};
use crate::dynamics::{energy, forces, on_constraint, SprayKind};
use crate::error::{Error, Result};
use crate::geometry::{QuasiState, System, Table3};
use crate::linalg::Mat;

pub const DEFAULT_DT: f64 = 1e-3;
/// Relative step of the central differences in `tangent_exp`.
pub const FD_STEP: f64 = 1e-5;

/// One classic RK4 step of `ẏ = f(y)`.
pub fn rk4_step<F>(f: &F, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(y)?;
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k2 = f(&y2)?;
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k3 = f(&y3)?;
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
    let k4 = f(&y4)?;
    Ok((0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(Error::Precondition(format!(
            "bad time grid t_end = {t_end}, dt = {dt}"
        )));
    }
    Ok((t_end / dt).round() as usize)
}

#[derive(Clone, Debug, Default)]
pub struct IntegrateOptions {
    /// Abort with `LeftChartBox` once `q` leaves this box.
    pub chart_box: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub kind: SprayKind,
    pub dt: f64,
    pub t: Vec<f64>,
    pub states: Vec<QuasiState>,
    /// `½ g(v, v)` per sample.
    pub energy: Vec<f64>,
    /// `max_i |v^i|` per sample.
    pub constraint_norm: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &QuasiState {
        self.states.last().unwrap()
    }

    pub fn max_constraint_drift(&self) -> f64 {
        self.constraint_norm.iter().fold(0.0, |m, x| m.max(*x))
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().fold(0.0, |m, e| m.max((e - e0).abs()))
    }
}

fn flow(sys: &System, kind: SprayKind) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
    let n = sys.n();
    move |y: &[f64]| {
        let (q, v) = y.split_at(n);
        let a = sys.frame_matrix(q)?;
        let mut out = a.mul_vec(v);
        out.extend(forces(sys, kind, q, v)?);
        Ok(out)
    }
}

/// One RK4 step of the nonholonomic field from `(q, v^a)`; `dt` may be
/// negative.
pub(crate) fn nh_step(
    sys: &System,
    q: &[f64],
    va: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (sys.n(), sys.m());
    let mut y = q.to_vec();
    y.extend_from_slice(va);
    y.resize(2 * n, 0.0);
    let y = rk4_step(&flow(sys, SprayKind::Nonholonomic), &y, dt)?;
    Ok((y[..n].to_vec(), y[n..n + m].to_vec()))
}

pub fn integrate(
    sys: &System,
    kind: SprayKind,
    state0: &QuasiState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_with(sys, kind, state0, t_end, dt, &IntegrateOptions::default())
}

pub fn integrate_with(
    sys: &System,
    kind: SprayKind,
    state0: &QuasiState,
    t_end: f64,
    dt: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let (n, m) = (sys.n(), sys.m());
    if state0.q.len() != n || state0.v.len() != n {
        return Err(Error::Precondition(format!(
            "state must have {n} coordinates and velocities"
        )));
    }
    if kind == SprayKind::Nonholonomic && state0.v[m..].iter().any(|x| *x != 0.0) {
        return Err(Error::Precondition(
            "nonholonomic trajectories start on the constraint (v^i = 0)".into(),
        ));
    }
    let count = steps(t_end, dt)?;
    let f = flow(sys, kind);
    let mut y: Vec<f64> = state0.q.iter().chain(&state0.v).copied().collect();
    let mut traj = Trajectory {
        kind,
        dt,
        t: Vec::with_capacity(count + 1),
        states: Vec::with_capacity(count + 1),
        energy: Vec::with_capacity(count + 1),
        constraint_norm: Vec::with_capacity(count + 1),
    };
    for step in 0..=count {
        let t = step as f64 * dt;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        let (q, v) = y.split_at(n);
        if let Some(b) = &opts.chart_box {
            if q.iter().zip(b).any(|(x, (lo, hi))| x < lo || x > hi) {
                return Err(Error::LeftChartBox { t });
            }
        }
        traj.t.push(t);
        traj.energy.push(energy(sys, q, v)?);
        traj.constraint_norm
            .push(v[m..].iter().fold(0.0, |a, x| a.max(x.abs())));
        traj.states.push(QuasiState::new(q.to_vec(), v.to_vec()));
        if step < count {
            y = rk4_step(&f, &y, dt)?;
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub t_end: f64,
    pub dt: f64,
    pub max_configuration_deviation: f64,
    pub max_velocity_deviation: f64,
    #[serde(skip)]
    pub nonholonomic: Trajectory,
    #[serde(skip)]
    pub geodesic: Trajectory,
}

/// Integrates the nonholonomic field of `sys` and the geodesic spray of
/// `ghat` from the same on-constraint state.
pub fn compare(
    sys: &System,
    ghat: &System,
    q0: &[f64],
    v0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<ComparisonReport> {
    let (n, m) = (sys.n(), sys.m());
    if v0.len() != n || v0[m..].iter().any(|x| *x != 0.0) {
        return Err(Error::Precondition(
            "initial velocity must lie in the constraint distribution".into(),
        ));
    }
    let s0 = QuasiState::new(q0.to_vec(), v0.to_vec());
    let nh = integrate(sys, SprayKind::Nonholonomic, &s0, t_end, dt)?;
    let geo = integrate(ghat, SprayKind::GeodesicOfExtension, &s0, t_end, dt)?;
    let mut dq: f64 = 0.0;
    let mut dv: f64 = 0.0;
    for (a, b) in nh.states.iter().zip(&geo.states) {
        for i in 0..n {
            dq = dq.max((a.q[i] - b.q[i]).abs());
            dv = dv.max((a.v[i] - b.v[i]).abs());
        }
    }
    Ok(ComparisonReport {
        t_end,
        dt,
        max_configuration_deviation: dq,
        max_velocity_deviation: dv,
        nonholonomic: nh,
        geodesic: geo,
    })
}

/// `exp^{nh}_q(v)`: endpoint at `t = 1` of the nonholonomic trajectory.
pub fn nh_exp(sys: &System, q: &[f64], va: &[f64], dt: f64) -> Result<Vec<f64>> {
    let s0 = QuasiState::on_constraint(q.to_vec(), va, sys.n());
    let f = flow(sys, SprayKind::Nonholonomic);
    let mut y: Vec<f64> = s0.q.iter().chain(&s0.v).copied().collect();
    for step in 0..steps(1.0, dt)? {
        y = rk4_step(&f, &y, dt)?;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState {
                t: (step + 1) as f64 * dt,
            });
        }
    }
    y.truncate(sys.n());
    Ok(y)
}

/// `E^β_a(v)`, the frame components at `exp^{nh}_q(v)` of
/// `∂ exp^{nh}_q / ∂v^a`, by central differences (`n×m`).
pub fn tangent_exp(sys: &System, q: &[f64], va: &[f64], dt: f64) -> Result<Mat<f64>> {
    let (n, m) = (sys.n(), sys.m());
    let norm = va.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    let h = FD_STEP * norm.max(1.0);
    let end = nh_exp(sys, q, va, dt)?;
    let a_inv =
        sys.frame_matrix(end.as_slice())?
            .inverse()
            .ok_or_else(|| Error::SingularFrame {
                q: end.clone(),
                condition_number: f64::INFINITY,
            })?;
    let mut e = Mat::zeros(n, m);
    for a in 0..m {
        let mut vp = va.to_vec();
        let mut vm = va.to_vec();
        vp[a] += h;
        vm[a] -= h;
        let ep = nh_exp(sys, q, &vp, dt)?;
        let em = nh_exp(sys, q, &vm, dt)?;
        let d: Vec<f64> = (0..n).map(|i| (ep[i] - em[i]) / (2.0 * h)).collect();
        let col = a_inv.mul_vec(&d);
        for b in 0..n {
            e[(b, a)] = col[b];
        }
    }
    Ok(e)
}

/// `∂E^β_a/∂v^b` at `v = 0` by central differences of [`tangent_exp`] with
/// outer step `outer`; entry `(β, a, b)`.
pub fn tangent_exp_derivative(sys: &System, q: &[f64], outer: f64, dt: f64) -> Result<Table3<f64>> {
    let (n, m) = (sys.n(), sys.m());
    let mut out = Table3::zeros(n);
    for b in 0..m {
        let mut vp = vec![0.0; m];
        let mut vm = vec![0.0; m];
        vp[b] = outer;
        vm[b] = -outer;
        let ep = tangent_exp(sys, q, &vp, dt)?;
        let em = tangent_exp(sys, q, &vm, dt)?;
        for beta in 0..n {
            for a in 0..m {
                out.set(beta, a, b, (ep[(beta, a)] - em[(beta, a)]) / (2.0 * outer));
            }
        }
    }
    Ok(out)
}

/// `ĝ_{exp(v)}(E(v)v, E(v)u) − ĝ_q(v, u)` for `v, u ∈ 𝒟_q`.
pub fn gauss_check_a(
    sys: &System,
    ghat: &System,
    q: &[f64],
    va: &[f64],
    ua: &[f64],
    dt: f64,
) -> Result<f64> {
    let (n, m) = (sys.n(), sys.m());
    if va.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let end = nh_exp(sys, q, va, dt)?;
    let e = tangent_exp(sys, q, va, dt)?;
    let ev = e.mul_vec(va);
    let eu = e.mul_vec(ua);
    let g_end = ghat.frame_metric(end.as_slice())?;
    let g0 = ghat.frame_metric(q)?;
    let mut lhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            lhs += g_end[(i, j)] * ev[i] * eu[j];
        }
    }
    let mut rhs = 0.0;
    for a in 0..m {
        for b in 0..m {
            rhs += g0[(a, b)] * va[a] * ua[b];
        }
    }
    Ok(lhs - rhs)
}

/// Samples of a transported vector `W` and covector `h` along the
/// nonholonomic trajectory they were integrated with.
#[derive(Clone, Debug, Serialize)]
pub struct TransportState {
    pub t: Vec<f64>,
    pub states: Vec<QuasiState>,
    pub w: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

/// Integrates `(q, v^a, W, h)` jointly with RK4:
/// `Ẇ^α = −T^α_{aβ} V^a W^β` for the chosen connection, and for the
/// covector (barred connection) `ḣ_c = Γ^b_{ac} V^a h_b`,
/// `ḣ_i = R^k_{ai} V^a h_k + λ_i` when `lambda_source` is set.
#[allow(clippy::too_many_arguments)]
fn transport(
    sys: &System,
    kind: ConnectionKind,
    q0: &[f64],
    va0: &[f64],
    w0: &[f64],
    h0: &[f64],
    lambda_source: bool,
    t_end: f64,
    dt: f64,
) -> Result<TransportState> {
    let (n, m) = (sys.n(), sys.m());
    let rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let q = &y[..n];
        let va = &y[n..n + m];
        let w = &y[n + m..2 * n + m];
        let h = &y[2 * n + m..];
        let oc = on_constraint(sys, q, va)?;
        let mut v = va.to_vec();
        v.resize(n, 0.0);
        let mut out = oc.geo.a.mul_vec(&v);
        out.extend_from_slice(&oc.f);
        // T^α_{aβ} for a ∈ 𝒟 only
        let table = match kind {
            ConnectionKind::Barred => barred_first_slot(sys, &oc.geo.g, &oc.lowered, &oc.geo.r)?,
            other => {
                let lc = raise(&oc.geo.g, &oc.lowered)
                    .ok_or_else(|| Error::SingularMetric { q: q.to_vec() })?;
                match other {
                    ConnectionKind::LeviCivita => lc,
                    _ => crate::connection::nonholonomic_from(&lc, m),
                }
            }
        };
        for al in 0..n {
            let mut s = 0.0;
            for a in 0..m {
                for be in 0..n {
                    s -= table.get(al, a, be) * va[a] * w[be];
                }
            }
            out.push(s);
        }
        // covector: ḣ_β = T^μ_{aβ} V^a h_μ (+ λ on 𝒟^g)
        for be in 0..n {
            let mut s = 0.0;
            for a in 0..m {
                for mu in 0..n {
                    s += table.get(mu, a, be) * va[a] * h[mu];
                }
            }
            if lambda_source && be >= m {
                s += oc.lambda[be - m];
            }
            out.push(s);
        }
        Ok(out)
    };
    let count = steps(t_end, dt)?;
    let mut y: Vec<f64> = q0.iter().chain(va0).chain(w0).chain(h0).copied().collect();
    let mut out = TransportState {
        t: Vec::with_capacity(count + 1),
        states: Vec::with_capacity(count + 1),
        w: Vec::with_capacity(count + 1),
        h: Vec::with_capacity(count + 1),
    };
    for step in 0..=count {
        let t = step as f64 * dt;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        out.t.push(t);
        out.states
            .push(QuasiState::on_constraint(y[..n].to_vec(), &y[n..n + m], n));
        out.w.push(y[n + m..2 * n + m].to_vec());
        out.h.push(y[2 * n + m..].to_vec());
        if step < count {
            y = rk4_step(&rhs, &y, dt)?;
        }
    }
    Ok(out)
}

/// Barred-connection entries `Γ̄^α_{aβ}` with first lower index in `𝒟`;
/// `Γ^c_{ab}` comes from the constrained block alone.
fn barred_first_slot(
    sys: &System,
    g: &Mat<f64>,
    lowered: &Table3<f64>,
    r: &Table3<f64>,
) -> Result<Table3<f64>> {
    let (n, m) = (sys.n(), sys.m());
    let gdd = g.block(0, 0, m, m);
    let rhs = Mat::from_fn(m, m * m, |c, ab| lowered.get(c, ab / m, ab % m));
    let sol = gdd
        .solve(&rhs)
        .ok_or_else(|| Error::SingularBlock { q: vec![] })?;
    let mut t = Table3::zeros(n);
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                t.set(c, a, b, sol[(c, a * m + b)]);
            }
        }
    }
    for k in m..n {
        for a in 0..m {
            for i in m..n {
                t.set(k, a, i, r.get(k, a, i));
            }
        }
    }
    Ok(t)
}

/// Parallel transport of `w0` along the nonholonomic trajectory of
/// `(q0, v^a)` with the given connection.
pub fn transport_vector(
    sys: &System,
    kind: ConnectionKind,
    q0: &[f64],
    va0: &[f64],
    w0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<TransportState> {
    let n = sys.n();
    transport(sys, kind, q0, va0, w0, &vec![0.0; n], false, t_end, dt)
}

/// Barred covector transport with the multiplier source term.
pub fn transport_covector(
    sys: &System,
    q0: &[f64],
    va0: &[f64],
    h0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<TransportState> {
    let n = sys.n();
    transport(
        sys,
        ConnectionKind::Barred,
        q0,
        va0,
        &vec![0.0; n],
        h0,
        true,
        t_end,
        dt,
    )
}

/// `max_t |ĝ(ċ, W) + h(W) − ĝ_q(v, w)|` with `W` the barred transport of
/// `w ∈ 𝒟^g_q` (given by its `k` components) and `h(0) = 0`.
pub fn gauss_check_b(
    sys: &System,
    ghat: &System,
    q: &[f64],
    va: &[f64],
    wi: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let (n, m) = (sys.n(), sys.m());
    let mut w0 = vec![0.0; m];
    w0.extend_from_slice(wi);
    let ts = transport(
        sys,
        ConnectionKind::Barred,
        q,
        va,
        &w0,
        &vec![0.0; n],
        true,
        t_end,
        dt,
    )?;
    let mut c0 = None;
    let mut drift: f64 = 0.0;
    for (s, (w, h)) in ts.states.iter().zip(ts.w.iter().zip(&ts.h)) {
        let g = ghat.frame_metric(s.q.as_slice())?;
        let mut c = 0.0;
        for b in 0..n {
            for a in 0..m {
                c += g[(a, b)] * s.v[a] * w[b];
            }
            c += h[b] * w[b];
        }
        let c0 = *c0.get_or_insert(c);
        drift = drift.max((c - c0).abs());
    }
    Ok(drift)
}
