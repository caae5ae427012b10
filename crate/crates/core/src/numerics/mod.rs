//! Dense row-major matrices and the seeded random stream used to fill them.

mod matrix;
mod rng;

pub use matrix::{matmul, matmul_transpose_b, relu, softmax_rows, Matrix};
pub(crate) use matrix::softmax_in_place;
pub use rng::{rng_uniform, RngState, SplitMix64};
