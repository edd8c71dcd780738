//! Dense linear algebra and seeded randomness.

mod matrix;
mod rng;
mod svd;

pub use matrix::{cosine_similarity, matmul, matmul_transposed, DenseMatrix, DenseVector};
pub(crate) use matrix::cosine_slices;
pub use rng::{fnv1a64, mix64, sample_gaussian, Broadcast, SeededRng};
pub use svd::{pseudo_inverse, svd, Svd, DEFAULT_RANK_TOL, MAX_SWEEPS, OFF_DIAGONAL_TOL};
