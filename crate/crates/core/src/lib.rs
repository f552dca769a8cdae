//! Constrained unlearning for a tiny autoregressive language model.
//!
//! A reference model is pretrained on a synthetic question/answer corpus.
//! Unlearning then minimizes a forgetting objective on a designated forget
//! split subject to a hard bound on the retain-split cross-entropy, solved by
//! warm-started primal-dual gradient updates.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
