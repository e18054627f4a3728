//! Search for and certification of `𝒟`-preserving metrics whose geodesic
//! spray extends the nonholonomic field.

mod certify;
mod chaplygin;
mod complete;
mod conditions;
mod fit;
mod scan;

pub use certify::{certify, CertificationReport, CertifyOptions, Check};
pub use chaplygin::{
    chaplygin_frame, chaplygin_solve, symbolic_g, ChaplyginOptions, ChaplyginSolution,
    FIRST_INTEGRAL_TOL,
};
pub use complete::{
    complete_metric, schur_eigenvalues, CompletedMetric, Completion, ALPHA_FLOOR, DEFAULT_MARGIN,
};
pub use conditions::{
    condition_a_residual, condition_b_residual, condition_b_residual_mode, iterated_conditions,
    level, level_name, LinearCondition, Mode, OffBlock, ThetaCandidate, DUAL_DEPTH, FLOW_FD_STEP,
};
pub use fit::{
    bisect, box_metric_scale, fit_ansatz, sample_states, solve_pointwise, AlgebraicSummary, Ansatz,
    ConditionReport, ConditionResidual, FitResult, DEFAULT_DEPTH, RANK_TOL, TOL_FEAS,
};
pub use scan::{scan_parameter, scan_point, ParameterScan, ScanOptions, ScanPoint};
