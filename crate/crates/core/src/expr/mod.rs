//! Scalar-expression DSL: parsing, printing and evaluation with forward-mode
//! derivatives.

mod ast;
mod eval;
mod parse;
mod scalar;

pub use ast::{Expression, Func};
pub use eval::{eval, eval_dual, Compiled, EvalContext, Tape};
pub use parse::parse;
pub use scalar::{directional, Dual, Scalar};
