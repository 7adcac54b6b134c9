//! Image containers, the state vectorization and the measurement permutation.

mod image;
pub mod io;
mod ordering;
mod permutation;

pub use image::{Day, RasterImage};
pub use ordering::StateOrdering;
pub use permutation::MeasurementPermutation;
