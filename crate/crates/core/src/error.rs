use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("unknown function `{name}`")]
    UnknownFunction { name: String },
    #[error("unbound name `{name}`")]
    UnboundName { name: String },
    #[error("domain error: {what}")]
    Domain { what: String },

    #[error("singular frame at q = {q:?} (condition number {condition_number:.3e})")]
    SingularFrame { q: Vec<f64>, condition_number: f64 },
    #[error("metric not positive-definite at q = {q:?} (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { q: Vec<f64>, min_eigenvalue: f64 },
    #[error("singular constrained metric block at q = {q:?}")]
    SingularBlock { q: Vec<f64> },
    #[error("singular metric at q = {q:?}")]
    SingularMetric { q: Vec<f64> },
    #[error("invalid system: {invariant}: {detail}")]
    Validation { invariant: String, detail: String },

    #[error("multiplier formulas disagree (residual {residual:.3e})")]
    Consistency { residual: f64 },

    #[error("chaplygin markup fails [X_a, E_i] = 0 (residual {residual:.3e})")]
    NotChaplygin { residual: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("pointwise candidate has no stencil for derivatives")]
    StencilUnavailable,

    #[error("trajectory left the chart box at t = {t}")]
    LeftChartBox { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("cannot parse system file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Module-qualified identifier used in reports and CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "expr.syntax",
            Error::UnknownFunction { .. } => "expr.unknown_function",
            Error::UnboundName { .. } => "expr.unbound_name",
            Error::Domain { .. } => "expr.domain",
            Error::SingularFrame { .. } => "geometry.singular_frame",
            Error::NotPositiveDefinite { .. } => "geometry.not_positive_definite",
            Error::SingularBlock { .. } => "geometry.singular_block",
            Error::SingularMetric { .. } => "connection.singular_metric",
            Error::Validation { .. } => "systems.validation",
            Error::Consistency { .. } => "dynamics.consistency",
            Error::NotChaplygin { .. } => "extension.not_chaplygin",
            Error::Infeasible(_) => "extension.infeasible",
            Error::StencilUnavailable => "extension.stencil_unavailable",
            Error::LeftChartBox { .. } => "integrate.left_chart_box",
            Error::NonFiniteState { .. } => "integrate.non_finite_state",
            Error::Precondition(_) => "integrate.precondition",
            Error::BadParams(_) => "systems.bad_params",
            Error::Parse(_) => "systems.parse",
            Error::Io(_) => "systems.io",
        }
    }

    pub(crate) fn domain(what: impl Into<String>) -> Self {
        Error::Domain { what: what.into() }
    }

    pub(crate) fn validation(invariant: &str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.to_string(),
            detail: detail.into(),
        }
    }
}
