//! Matrix-weighted Besov-type and Triebel–Lizorkin-type sequence spaces on truncated dyadic grids,
//! almost-diagonal operators acting on them, and the threshold arithmetic that decides boundedness.

pub mod adkernel;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod quadrature;
pub mod seqspace;
pub mod stats;
pub mod thresholds;
pub mod weights;

pub use dyadic::{cube_at, distance_factor, DyadicCube, Window};
pub use error::{Error, Result};
