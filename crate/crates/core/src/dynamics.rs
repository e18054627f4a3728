//! Force coefficients `F^α` of the sprays `Γ = v^α X_α^C + F^α X_α^V` and the
//! Lagrange multipliers.

use serde::{Deserialize, Serialize};

use crate::connection::{barred_from, koszul_lowered, nonholonomic_from, raise};
use crate::error::{Error, Result};
use crate::expr::Scalar;
use crate::geometry::{FrameGeometry, QuasiState, System, Table3};
use crate::linalg::Mat;

pub const MULTIPLIER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SprayKind {
    Geodesic,
    Nonholonomic,
    ExtProjection,
    ExtNhConnection,
    ExtBarred,
    GeodesicOfExtension,
}

impl SprayKind {
    pub const EXTENSIONS: [SprayKind; 3] = [
        SprayKind::ExtProjection,
        SprayKind::ExtNhConnection,
        SprayKind::ExtBarred,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SprayKind::Geodesic => "geodesic",
            SprayKind::Nonholonomic => "nonholonomic",
            SprayKind::ExtProjection => "ext_projection",
            SprayKind::ExtNhConnection => "ext_nh_connection",
            SprayKind::ExtBarred => "ext_barred",
            SprayKind::GeodesicOfExtension => "geodesic_of_extension",
        }
    }

    pub fn from_name(s: &str) -> Option<SprayKind> {
        [
            SprayKind::Geodesic,
            SprayKind::Nonholonomic,
            SprayKind::ExtProjection,
            SprayKind::ExtNhConnection,
            SprayKind::ExtBarred,
            SprayKind::GeodesicOfExtension,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SodeEval {
    pub kind: SprayKind,
    pub forces: Vec<f64>,
}

/// `f^b = −(g_𝒟𝒟⁻¹)^{ba} Γ_{acd} v^c v^d` from lowered symbols; in an
/// adapted frame this is `−Γ^b_{cd} v^c v^d`.
pub fn constrained_forces<T: Scalar>(
    g: &Mat<T>,
    lowered: &Table3<T>,
    m: usize,
    va: &[T],
) -> Option<Vec<T>> {
    let rhs = Mat::from_fn(m, 1, |a, _| {
        let mut s = T::zero();
        for c in 0..m {
            for d in 0..m {
                s += lowered.get(a, c, d) * va[c] * va[d];
            }
        }
        -s
    });
    Some(g.block(0, 0, m, m).solve(&rhs)?.column(0))
}

/// Everything known at an on-constraint state `(q, v^a)`.
#[derive(Clone, Debug)]
pub struct OnConstraint<T> {
    pub geo: FrameGeometry<T>,
    /// `Γ_{γαβ} = g_{γμ} Γ^μ_{αβ}`
    pub lowered: Table3<T>,
    /// `f^a`
    pub f: Vec<T>,
    /// `λ_i` from the Lagrangian definition.
    pub lambda: Vec<T>,
    /// `λ_i` from the Christoffel route.
    pub lambda_christoffel: Vec<T>,
}

fn singular_block<T: Scalar>(q: &[T]) -> Error {
    Error::SingularBlock {
        q: q.iter().map(|x| x.re()).collect(),
    }
}

pub fn on_constraint<T: Scalar>(sys: &System, q: &[T], va: &[T]) -> Result<OnConstraint<T>> {
    let (n, m) = (sys.n(), sys.m());
    let geo = sys.geometry(q)?;
    let lowered = koszul_lowered(&geo);
    let f = constrained_forces(&geo.g, &lowered, m, va).ok_or_else(|| singular_block(q))?;
    let mut lambda = Vec::with_capacity(n - m);
    let mut lambda_c = Vec::with_capacity(n - m);
    for i in m..n {
        let mut s = T::zero();
        let mut c = T::zero();
        for a in 0..m {
            for b in 0..m {
                let vv = va[a] * va[b];
                s += (geo.dg[a][(i, b)] - geo.dg[i][(a, b)].scale(0.5)) * vv;
                for al in 0..n {
                    s += geo.g[(al, b)] * geo.r.get(al, i, a) * vv;
                }
                c += lowered.get(i, a, b) * vv;
            }
            s += geo.g[(i, a)] * f[a];
            c += geo.g[(i, a)] * f[a];
        }
        lambda.push(s);
        lambda_c.push(c);
    }
    Ok(OnConstraint {
        geo,
        lowered,
        f,
        lambda,
        lambda_christoffel: lambda_c,
    })
}

pub fn nonholonomic_forces(sys: &System, q: &[f64], va: &[f64]) -> Result<SodeEval> {
    let oc = on_constraint(sys, q, va)?;
    let mut forces = oc.f;
    forces.resize(sys.n(), 0.0);
    Ok(SodeEval {
        kind: SprayKind::Nonholonomic,
        forces,
    })
}

/// Multipliers `λ_i`; both derivations are evaluated and must agree.
pub fn multipliers(sys: &System, q: &[f64], va: &[f64]) -> Result<Vec<f64>> {
    let oc = on_constraint(sys, q, va)?;
    let residual = oc
        .lambda
        .iter()
        .zip(&oc.lambda_christoffel)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = oc.lambda.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    if residual > MULTIPLIER_TOL * scale {
        return Err(Error::Consistency { residual });
    }
    Ok(oc.lambda)
}

/// Force vector of any spray kind at a full state `(q, v)`. For
/// `Nonholonomic` only `v^a` is read and `F^i = 0`. `GeodesicOfExtension`
/// is the geodesic spray of whatever metric `sys` carries.
pub fn forces<T: Scalar>(sys: &System, kind: SprayKind, q: &[T], v: &[T]) -> Result<Vec<T>> {
    let (n, m) = (sys.n(), sys.m());
    let geo = sys.geometry(q)?;
    let lowered = koszul_lowered(&geo);
    if kind == SprayKind::Nonholonomic {
        let mut f =
            constrained_forces(&geo.g, &lowered, m, &v[..m]).ok_or_else(|| singular_block(q))?;
        f.resize(n, T::zero());
        return Ok(f);
    }
    let lc = raise(&geo.g, &lowered).ok_or_else(|| Error::SingularMetric {
        q: q.iter().map(|x| x.re()).collect(),
    })?;
    Ok(match kind {
        SprayKind::Geodesic | SprayKind::GeodesicOfExtension => lc.spray(v),
        SprayKind::Nonholonomic => unreachable!(),
        SprayKind::ExtProjection => {
            let f = lc.spray(v);
            let k = geo.correction(m).ok_or_else(|| singular_block(q))?;
            let mut out = vec![T::zero(); n];
            for a in 0..m {
                let mut s = f[a];
                for i in m..n {
                    s -= f[i] * k[(a, i - m)];
                }
                out[a] = s;
            }
            out
        }
        SprayKind::ExtNhConnection => nonholonomic_from(&lc, m).spray(v),
        SprayKind::ExtBarred => barred_from(&lc, &geo.r, m).spray(v),
    })
}

pub fn sode_eval(sys: &System, kind: SprayKind, state: &QuasiState) -> Result<SodeEval> {
    Ok(SodeEval {
        kind,
        forces: forces(sys, kind, state.q.as_slice(), state.v.as_slice())?,
    })
}

pub fn geodesic_forces(sys: &System, state: &QuasiState) -> Result<SodeEval> {
    sode_eval(sys, SprayKind::Geodesic, state)
}

pub fn extension_forces(sys: &System, state: &QuasiState, kind: SprayKind) -> Result<SodeEval> {
    sode_eval(sys, kind, state)
}

/// Geodesic spray of a completed metric; `ghat` is the system carrying it.
pub fn extension_geodesic_forces(ghat: &System, state: &QuasiState) -> Result<SodeEval> {
    sode_eval(ghat, SprayKind::GeodesicOfExtension, state)
}

/// Constrained kinetic energy `½ g_ab v^a v^b`.
pub fn constrained_energy(sys: &System, q: &[f64], v: &[f64]) -> Result<f64> {
    let g = sys.frame_metric(q)?;
    let m = sys.m();
    let mut e = 0.0;
    for a in 0..m {
        for b in 0..m {
            e += g[(a, b)] * v[a] * v[b];
        }
    }
    Ok(0.5 * e)
}

/// Full kinetic energy `½ g_{αβ} v^α v^β`.
pub fn energy(sys: &System, q: &[f64], v: &[f64]) -> Result<f64> {
    let g = sys.frame_metric(q)?;
    let n = sys.n();
    let mut e = 0.0;
    for a in 0..n {
        for b in 0..n {
            e += g[(a, b)] * v[a] * v[b];
        }
    }
    Ok(0.5 * e)
}
