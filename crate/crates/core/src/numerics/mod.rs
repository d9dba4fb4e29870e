//! Dense matrix arithmetic and the pinned deterministic PRNG.

mod mat;
mod rng;
mod scalar;

pub use mat::{argmax, outer, Mat, ShapeError};
pub use rng::RngState;
pub use scalar::Scalar;
