use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::Expression;

/// Completion rule for the `ĝ_ij` block of an extension metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IjPolicy {
    /// `ĝ_ij = α δ_ij`
    Alpha(f64),
    /// `ĝ_ij = β g_ij`
    Beta(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricSpec {
    /// Kinetic metric `G_{μν}` in the coordinate basis, `n×n`.
    Coordinate { entries: Vec<Vec<Expression>> },
    /// Metric already expressed in the working frame, `n×n`.
    Frame { entries: Vec<Vec<Expression>> },
    /// `𝒟`-preserving modification of `base`: the `(a,b)` block is taken from
    /// `base`, `off[a][i]` gives `ĝ_{a,m+i}` and `ij` fixes the last block.
    Extension {
        base: Box<MetricSpec>,
        off: Vec<Vec<Expression>>,
        ij: IjPolicy,
    },
}

impl MetricSpec {
    pub fn base(&self) -> &MetricSpec {
        match self {
            MetricSpec::Extension { base, .. } => base.base(),
            other => other,
        }
    }
}

/// Which part of the kinetic metric validation requires to be
/// positive-definite. `ConstrainedBlock` admits pseudo-Riemannian `g` whose
/// restriction to the constraint distribution is still positive-definite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricCheck {
    #[default]
    PositiveDefinite,
    ConstrainedBlock,
}

impl MetricCheck {
    fn is_default(&self) -> bool {
        *self == MetricCheck::PositiveDefinite
    }
}

/// Vertical generators `(E_i)_Q` of a Chaplygin symmetry, as coordinate
/// vector fields (one list of `n` component expressions per generator).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaplyginMarkup {
    #[serde(default)]
    pub group: String,
    pub generators: Vec<Vec<Expression>>,
}

/// User-facing system definition. `frame[β][α]` is `A^α_β`, the `α`-th
/// coordinate component of frame field `X_β`; the first `constraint_rank`
/// fields span the constraint distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: String,
    pub coordinates: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub constraint_rank: usize,
    pub frame: Vec<Vec<Expression>>,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaplygin: Option<ChaplyginMarkup>,
    #[serde(default)]
    pub domain_box: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "MetricCheck::is_default")]
    pub metric_check: MetricCheck,
    /// Optional short names of the frame fields, used in reports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_labels: Vec<String>,
}

impl SystemSpec {
    pub fn n(&self) -> usize {
        self.coordinates.len()
    }

    pub fn m(&self) -> usize {
        self.constraint_rank
    }

    pub fn k(&self) -> usize {
        self.n() - self.m()
    }

    /// Declared box in coordinate order; undeclared coordinates get `[-1, 1]`.
    pub fn box_ranges(&self) -> Vec<(f64, f64)> {
        self.coordinates
            .iter()
            .map(|c| {
                self.domain_box
                    .get(c)
                    .map(|r| (r[0], r[1]))
                    .unwrap_or((-1.0, 1.0))
            })
            .collect()
    }

    /// Name of frame field `beta`; its index when no labels are given.
    pub fn frame_label(&self, beta: usize) -> String {
        self.frame_labels
            .get(beta)
            .cloned()
            .unwrap_or_else(|| beta.to_string())
    }

    pub fn with_metric(&self, metric: MetricSpec) -> SystemSpec {
        SystemSpec {
            metric,
            ..self.clone()
        }
    }
}

/// Configuration point plus frame quasi-velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiState {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl QuasiState {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Self {
        QuasiState { q, v }
    }

    /// On-constraint state from `v^a`, padding `v^i = 0`.
    pub fn on_constraint(q: Vec<f64>, va: &[f64], n: usize) -> Self {
        let mut v = va.to_vec();
        v.resize(n, 0.0);
        QuasiState { q, v }
    }
}
