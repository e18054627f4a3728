//! Completion of an off-diagonal block to a full `𝒟`-preserving metric.

use serde::{Deserialize, Serialize};

use super::conditions::OffBlock;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{IjPolicy, MetricCheck, MetricSpec, System, PD_MARGIN};
use crate::linalg::Mat;

pub const DEFAULT_MARGIN: f64 = 0.1;
/// Floor for the automatic `α`, relative to the largest eigenvalue of
/// `g_𝒟𝒟`, used when the off-diagonal block vanishes.
pub const ALPHA_FLOOR: f64 = 1e-3;

/// How the `ĝ_ij` block is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Completion {
    /// Constant `α = (1 + margin) · max_q max σ(BᵀA⁻¹B)` over the sample.
    Auto { margin: f64 },
    /// User-forced constant `α`; rejected unless `ĝ` is positive-definite.
    Alpha { alpha: f64 },
    /// `ĝ_ij = β g_ij`; indefinite results are reported, not rejected.
    Beta { beta: f64 },
}

impl Default for Completion {
    fn default() -> Self {
        Completion::Auto {
            margin: DEFAULT_MARGIN,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompletedMetric {
    pub policy: Completion,
    pub ij: IjPolicy,
    /// Max over the sample of the largest eigenvalue of `BᵀA⁻¹B`.
    pub max_sigma: f64,
    /// Min over the sample of the smallest eigenvalue of `ĝ`.
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
    pub off: Vec<Vec<Expression>>,
    #[serde(skip)]
    pub system: System,
}

/// Eigenvalues (ascending) of `BᵀA⁻¹B` with `A = g_ab`, `B = ĝ_ai`.
pub fn schur_eigenvalues(sys: &System, off: &OffBlock, q: &[f64]) -> Result<Vec<f64>> {
    let m = sys.m();
    let g = sys.frame_metric(q)?;
    let a = g.block(0, 0, m, m);
    let b = off.eval(q)?;
    let aib = a
        .solve(&b)
        .ok_or_else(|| Error::SingularBlock { q: q.to_vec() })?;
    let s = b.transpose().mul(&aib);
    let sym = Mat::from_fn(s.rows, s.cols, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    Ok(sym.sym_eigenvalues())
}

/// Assembles `ĝ` from `g`, the block `off` and `policy`, certifying the
/// result on `points` by symmetric eigenvalues.
pub fn complete_metric(
    sys: &System,
    off: &[Vec<Expression>],
    policy: Completion,
    points: &[Vec<f64>],
) -> Result<CompletedMetric> {
    let block = OffBlock::bind(sys, off)?;
    let m = sys.m();
    let mut max_sigma: f64 = 0.0;
    let mut scale_dd: f64 = 0.0;
    for q in points {
        let ev = schur_eigenvalues(sys, &block, q)?;
        max_sigma = max_sigma.max(ev.last().copied().unwrap_or(0.0));
        let g = sys.frame_metric(q.as_slice())?;
        let top = g.block(0, 0, m, m).sym_eigenvalues();
        scale_dd = scale_dd.max(*top.last().unwrap());
    }
    let ij = match policy {
        Completion::Auto { margin } => {
            IjPolicy::Alpha(((1.0 + margin) * max_sigma).max(ALPHA_FLOOR * scale_dd))
        }
        Completion::Alpha { alpha } => IjPolicy::Alpha(alpha),
        Completion::Beta { beta } => IjPolicy::Beta(beta),
    };
    let mut spec = sys.spec.with_metric(MetricSpec::Extension {
        base: Box::new(sys.spec.metric.clone()),
        off: off.to_vec(),
        ij,
    });
    spec.metric_check = MetricCheck::PositiveDefinite;
    let ghat = System::bind(spec)?;
    let mut min_eig = f64::INFINITY;
    let mut worst = None;
    for q in points {
        let g = ghat.frame_metric(q.as_slice())?;
        let e = g.sym_eigenvalues()[0];
        if e < min_eig {
            min_eig = e;
            worst = Some(q.clone());
        }
    }
    let positive_definite = min_eig > PD_MARGIN * scale_dd.max(1.0);
    let mut system = ghat;
    if !positive_definite {
        match policy {
            Completion::Beta { .. } => {
                let mut spec = system.spec.clone();
                spec.metric_check = MetricCheck::ConstrainedBlock;
                system = System::bind(spec)?;
            }
            _ => {
                return Err(Error::NotPositiveDefinite {
                    q: worst.unwrap_or_default(),
                    min_eigenvalue: min_eig,
                })
            }
        }
    }
    Ok(CompletedMetric {
        policy,
        ij,
        max_sigma,
        min_eigenvalue: min_eig,
        positive_definite,
        off: off.to_vec(),
        system,
    })
}
