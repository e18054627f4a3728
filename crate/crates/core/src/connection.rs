//! Christoffel symbols in the working frame, `∇_{X_α} X_β = Γ^γ_{αβ} X_γ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Scalar;
use crate::geometry::{FrameGeometry, System, Table3};
use crate::linalg::Mat;

pub use crate::integrate::{transport_covector, transport_vector, TransportState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    LeviCivita,
    Nonholonomic,
    Barred,
}

#[derive(Clone, Debug)]
pub struct ChristoffelTable<T> {
    pub kind: ConnectionKind,
    pub gamma: Table3<T>,
}

impl<T: Scalar> ChristoffelTable<T> {
    pub fn get(&self, g: usize, a: usize, b: usize) -> T {
        self.gamma.get(g, a, b)
    }

    pub fn spray(&self, v: &[T]) -> Vec<T> {
        self.gamma.spray(v)
    }
}

/// Lowered symbols `Γ_{γαβ} = g_{γμ} Γ^μ_{αβ}` from Koszul's formula
/// `2Γ_{γαβ} = X_α g_{βγ} + X_β g_{αγ} − X_γ g_{αβ}
///   + R^μ_{αβ} g_{μγ} + R^μ_{γα} g_{μβ} + R^μ_{γβ} g_{μα}`.
/// These need no inverse metric, so constrained quantities stay defined
/// even where `g` degenerates away from `𝒟`.
pub fn koszul_lowered<T: Scalar>(geo: &FrameGeometry<T>) -> Table3<T> {
    let n = geo.g.rows;
    let (g, r, dg) = (&geo.g, &geo.r, &geo.dg);
    let mut out = Table3::zeros(n);
    for al in 0..n {
        for be in 0..n {
            for gm in 0..n {
                let mut s = dg[al][(be, gm)] + dg[be][(al, gm)] - dg[gm][(al, be)];
                for mu in 0..n {
                    s += r.get(mu, al, be) * g[(mu, gm)]
                        + r.get(mu, gm, al) * g[(mu, be)]
                        + r.get(mu, gm, be) * g[(mu, al)];
                }
                out.set(gm, al, be, s.scale(0.5));
            }
        }
    }
    out
}

/// Raises the first index of a lowered table with the frame metric.
pub fn raise<T: Scalar>(g: &Mat<T>, lowered: &Table3<T>) -> Option<Table3<T>> {
    let n = lowered.n;
    let rhs = Mat::from_fn(n, n * n, |gm, ab| lowered.get(gm, ab / n, ab % n));
    let sol = g.solve(&rhs)?;
    let mut out = Table3::zeros(n);
    for mu in 0..n {
        for ab in 0..n * n {
            out.set(mu, ab / n, ab % n, sol[(mu, ab)]);
        }
    }
    Some(out)
}

/// Levi-Civita symbols of the frame metric at a prepared point.
pub fn koszul<T: Scalar>(geo: &FrameGeometry<T>) -> Result<Table3<T>> {
    raise(&geo.g, &koszul_lowered(geo)).ok_or_else(|| Error::SingularMetric { q: vec![] })
}

pub fn levi_civita<T: Scalar>(sys: &System, q: &[T]) -> Result<ChristoffelTable<T>> {
    let geo = sys.geometry(q)?;
    let gamma = koszul(&geo).map_err(|_| Error::SingularMetric {
        q: q.iter().map(|x| x.re()).collect(),
    })?;
    Ok(ChristoffelTable {
        kind: ConnectionKind::LeviCivita,
        gamma,
    })
}

/// Block rules of `∇^{nh}_X Y = P(∇_X Y) + ∇_X(Q Y)` in an adapted frame
/// with `g_ai = 0`: columns `β ∈ 𝒟` keep their `𝒟` part only, columns
/// `β ∈ 𝒟^g` get their `𝒟` part doubled.
pub fn nonholonomic_from<T: Scalar>(lc: &Table3<T>, m: usize) -> Table3<T> {
    let n = lc.n;
    let mut out = Table3::zeros(n);
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                let x = lc.get(g, a, b);
                let v = match (g < m, b < m) {
                    (true, true) => x,
                    (false, true) => T::zero(),
                    (true, false) => x.scale(2.0),
                    (false, false) => x,
                };
                out.set(g, a, b, v);
            }
        }
    }
    out
}

pub fn nonholonomic_connection<T: Scalar>(sys: &System, q: &[T]) -> Result<ChristoffelTable<T>> {
    let lc = levi_civita(sys, q)?;
    Ok(ChristoffelTable {
        kind: ConnectionKind::Nonholonomic,
        gamma: nonholonomic_from(&lc.gamma, sys.m()),
    })
}

/// `∇̄_{X_a}X_b = Γ^c_{ab}X_c`, `∇̄_{X_a}X_i = R^k_{ai}X_k`,
/// `∇̄_{X_i}X_a = R^c_{ia}X_c`, `∇̄_{X_i}X_j = Γ^k_{ij}X_k`.
pub fn barred_from<T: Scalar>(lc: &Table3<T>, r: &Table3<T>, m: usize) -> Table3<T> {
    let n = lc.n;
    let mut out = Table3::zeros(n);
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                let v = match (a < m, b < m, g < m) {
                    (true, true, true) => lc.get(g, a, b),
                    (true, false, false) => r.get(g, a, b),
                    (false, true, true) => r.get(g, a, b),
                    (false, false, false) => lc.get(g, a, b),
                    _ => T::zero(),
                };
                out.set(g, a, b, v);
            }
        }
    }
    out
}

pub fn barred_connection<T: Scalar>(sys: &System, q: &[T]) -> Result<ChristoffelTable<T>> {
    let geo = sys.geometry(q)?;
    let lc = koszul(&geo).map_err(|_| Error::SingularMetric {
        q: q.iter().map(|x| x.re()).collect(),
    })?;
    Ok(ChristoffelTable {
        kind: ConnectionKind::Barred,
        gamma: barred_from(&lc, &geo.r, sys.m()),
    })
}

pub fn table<T: Scalar>(
    sys: &System,
    q: &[T],
    kind: ConnectionKind,
) -> Result<ChristoffelTable<T>> {
    match kind {
        ConnectionKind::LeviCivita => levi_civita(sys, q),
        ConnectionKind::Nonholonomic => nonholonomic_connection(sys, q),
        ConnectionKind::Barred => barred_connection(sys, q),
    }
}

/// Max `|Γ^γ_{αβ} − Γ^γ_{βα} − R^γ_{αβ}|`.
pub fn torsion_residual(geo: &FrameGeometry<f64>, gamma: &Table3<f64>) -> f64 {
    let n = gamma.n;
    let mut worst: f64 = 0.0;
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                let t = gamma.get(g, a, b) - gamma.get(g, b, a) - geo.r.get(g, a, b);
                worst = worst.max(t.abs());
            }
        }
    }
    worst
}

/// Max `|X_γ g_{αβ} − g_{μβ}Γ^μ_{γα} − g_{αμ}Γ^μ_{γβ}|`.
pub fn compatibility_residual(geo: &FrameGeometry<f64>, gamma: &Table3<f64>) -> f64 {
    let n = gamma.n;
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut s = geo.dg[c][(a, b)];
                for mu in 0..n {
                    s -=
                        geo.g[(mu, b)] * gamma.get(mu, c, a) + geo.g[(a, mu)] * gamma.get(mu, c, b);
                }
                worst = worst.max(s.abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{MetricSpec, SystemSpec};

    fn euclid(n: usize) -> System {
        let e = |s: &str| parse(s).unwrap();
        let id: Vec<Vec<_>> = (0..n)
            .map(|i| (0..n).map(|j| e(if i == j { "1" } else { "0" })).collect())
            .collect();
        System::new(SystemSpec {
            name: "euclid".into(),
            coordinates: (0..n).map(|i| format!("q{i}")).collect(),
            parameters: Default::default(),
            constraint_rank: 1,
            frame: id.clone(),
            metric: MetricSpec::Coordinate { entries: id },
            chaplygin: None,
            domain_box: Default::default(),
            metric_check: Default::default(),
            frame_labels: Vec::new(),
        })
        .unwrap()
    }

    #[test]
    fn euclidean_tables_vanish() {
        let sys = euclid(3);
        let q = [0.1, 0.2, 0.3];
        for kind in [
            ConnectionKind::LeviCivita,
            ConnectionKind::Nonholonomic,
            ConnectionKind::Barred,
        ] {
            assert_eq!(table(&sys, &q[..], kind).unwrap().gamma.max_abs(), 0.0);
        }
    }
}
