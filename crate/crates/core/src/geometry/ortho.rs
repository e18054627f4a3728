//! Symbolic adaptation `X̃_i = X_i + K^a_i X_a`, `K = −g_ab⁻¹ g_bi`, so that
//! the returned frame is again a plain expression matrix.

use crate::error::{Error, Result};
use crate::expr::Expression as E;

use super::sample::halton_points;
use super::spec::{MetricSpec, SystemSpec};
use super::system::{System, DEFAULT_SAMPLES, TOL_ORTHO};

/// `g(u, w) = u^μ G_{μν} w^ν` for coordinate vector fields `u`, `w`.
pub fn symbolic_inner(coord_metric: &[Vec<E>], u: &[E], w: &[E]) -> E {
    let n = u.len();
    E::sum((0..n).flat_map(|mu| {
        (0..n).map(move |nu| {
            E::mul(
                E::mul(u[mu].clone(), coord_metric[mu][nu].clone()),
                w[nu].clone(),
            )
        })
    }))
}

fn minor(m: &[Vec<E>], skip_r: usize, skip_c: usize) -> Vec<Vec<E>> {
    m.iter()
        .enumerate()
        .filter(|(r, _)| *r != skip_r)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(c, _)| *c != skip_c)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// Laplace expansion along the first row.
pub fn symbolic_det(m: &[Vec<E>]) -> E {
    match m.len() {
        0 => E::num(1.0),
        1 => m[0][0].clone(),
        _ => E::sum((0..m.len()).map(|c| {
            let term = E::mul(m[0][c].clone(), symbolic_det(&minor(m, 0, c)));
            if c % 2 == 0 {
                term
            } else {
                E::neg(term)
            }
        })),
    }
}

/// `adj(m)[a][b] = (−1)^{a+b} det(minor(b, a))`.
fn symbolic_adjugate(m: &[Vec<E>]) -> Vec<Vec<E>> {
    let n = m.len();
    if n == 1 {
        return vec![vec![E::num(1.0)]];
    }
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let d = symbolic_det(&minor(m, b, a));
                    if (a + b) % 2 == 0 {
                        d
                    } else {
                        E::neg(d)
                    }
                })
                .collect()
        })
        .collect()
}

/// Symbolic frame metric `g_{αβ}` for non-extension metrics.
pub fn symbolic_frame_metric(spec: &SystemSpec) -> Result<Vec<Vec<E>>> {
    let n = spec.n();
    match &spec.metric {
        MetricSpec::Frame { entries } => Ok(entries.clone()),
        MetricSpec::Coordinate { entries } => Ok((0..n)
            .map(|al| {
                (0..n)
                    .map(|be| symbolic_inner(entries, &spec.frame[al], &spec.frame[be]))
                    .collect()
            })
            .collect()),
        MetricSpec::Extension { .. } => Err(Error::validation(
            "orthogonalize",
            "extension metrics cannot be re-adapted",
        )),
    }
}

/// Replaces the complement fields so that `g(X_a, X̃_i) = 0`. Specs whose
/// sampled `|g_ai|` is already below the orthogonality tolerance are returned
/// unchanged, which makes the operation idempotent.
pub fn orthogonalize(spec: &SystemSpec) -> Result<SystemSpec> {
    let sys = System::bind(spec.clone())?;
    let points = halton_points(sys.ranges(), DEFAULT_SAMPLES, 0);
    if sys.max_off_block(&points)? < TOL_ORTHO {
        return Ok(spec.clone());
    }
    for q in &points {
        let g = sys.frame_metric(q.as_slice())?;
        if g.block(0, 0, sys.m(), sys.m()).inverse().is_none() {
            return Err(Error::SingularBlock { q: q.clone() });
        }
    }
    let (n, m) = (spec.n(), spec.m());
    let g = symbolic_frame_metric(spec)?;
    let gab: Vec<Vec<E>> = (0..m).map(|a| g[a][..m].to_vec()).collect();
    let det = symbolic_det(&gab);
    let adj = symbolic_adjugate(&gab);
    // K[a][i] = −(adj · g_bi)[a] / det
    let kmat: Vec<Vec<E>> = (0..m)
        .map(|a| {
            (m..n)
                .map(|i| {
                    let num = E::sum((0..m).map(|b| E::mul(adj[a][b].clone(), g[b][i].clone())));
                    E::neg(E::div(num, det.clone()))
                })
                .collect()
        })
        .collect();
    let mut out = spec.clone();
    for i in m..n {
        out.frame[i] = (0..n)
            .map(|al| {
                E::add(
                    spec.frame[i][al].clone(),
                    E::sum(
                        (0..m).map(|a| E::mul(kmat[a][i - m].clone(), spec.frame[a][al].clone())),
                    ),
                )
            })
            .collect();
    }
    if let MetricSpec::Frame { .. } = spec.metric {
        let mut e = g.clone();
        for a in 0..m {
            for i in m..n {
                e[a][i] = E::num(0.0);
                e[i][a] = E::num(0.0);
            }
        }
        for i in m..n {
            for j in i..n {
                let mut t = g[i][j].clone();
                for a in 0..m {
                    t = E::add(t, E::mul(kmat[a][i - m].clone(), g[a][j].clone()));
                    t = E::add(t, E::mul(kmat[a][j - m].clone(), g[i][a].clone()));
                    for b in 0..m {
                        t = E::add(
                            t,
                            E::mul(
                                E::mul(kmat[a][i - m].clone(), kmat[b][j - m].clone()),
                                g[a][b].clone(),
                            ),
                        );
                    }
                }
                e[i][j] = t.clone();
                e[j][i] = t;
            }
        }
        out.metric = MetricSpec::Frame { entries: e };
    }
    Ok(out)
}
