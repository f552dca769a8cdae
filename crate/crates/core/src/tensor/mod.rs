//! Dense arrays and a small reverse-mode differentiation engine.

mod array;
mod gradcheck;
mod graph;
mod scalar;

pub use array::DenseArray;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use graph::{argmax, log_sum_exp, Axis, Bindings, Graph, NodeId, Nonlinearity, Op};
pub use scalar::{Precision, Scalar};
