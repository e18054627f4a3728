//! Nonholonomic mechanics in anholonomic frames: sprays, connections,
//! geodesic extensions of the constraint distribution and their checks.

// index loops mirror the tensor notation; `!(x > 0.0)` rejects NaN on purpose
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::should_implement_trait,
    clippy::redundant_guards
)]

pub mod connection;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod extension;
pub mod geometry;
pub mod integrate;
pub mod linalg;
pub mod systems;

pub use connection::ConnectionKind;
pub use dynamics::SprayKind;
pub use error::{Error, Result};
pub use expr::{Expression, Scalar};
pub use geometry::{IjPolicy, MetricSpec, QuasiState, System, SystemSpec};
