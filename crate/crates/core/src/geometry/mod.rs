//! Configuration chart, anholonomic frame, frame metric and bracket
//! coefficients.

mod ortho;
mod sample;
mod spec;
mod system;

pub use ortho::{orthogonalize, symbolic_det, symbolic_frame_metric, symbolic_inner};
pub use sample::{halton_points, random_vectors};
pub use spec::{ChaplyginMarkup, IjPolicy, MetricCheck, MetricSpec, QuasiState, SystemSpec};
pub use system::{
    FrameGeometry, System, Table3, CHAPLYGIN_TOL, DEFAULT_SAMPLES, MAX_CONDITION, PD_MARGIN,
    TOL_ORTHO,
};
