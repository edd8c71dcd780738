//! Randomly weighted networks with per-task multiplicative contexts.
//!
//! A frozen random encoder `C` and readout `R` are shared by every task.
//! Each task owns only a scalar `α_t` and a vector `v^t`, so learning a new
//! task never touches parameters of earlier ones.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod render;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector, SeededRng};
pub use model::{CrwnModel, ModelDims, TaskContext};
pub use tasks::{build_suite, SuiteName, TaskSuite};
pub use train::{run_continual, TrainConfig, Trainer};

// Compile and run the guide's snippets as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
}
