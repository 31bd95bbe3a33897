//! Edge-enhancing diffusion inpainting by a lagged-diffusivity fixed-point
//! iteration, with numerical audits of its a-priori estimates.
//!
//! Images are stored row-major with unit grid spacing; `x` indexes columns
//! and `y` rows. A [`Mask`] marks the known pixels `K`; its complement `G`
//! holds the unknowns.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod pgm;
pub mod report;
pub mod smoothing;
pub mod solver;
pub mod sparsify;
pub mod tensor;
pub mod testdata;

pub use error::{EedError, Result};
pub use fixed_point::{default_start, iterate, FixedPointConfig, IterationRecord, IterationReport, Status};
pub use grid::{Image, Mask, VectorField};
pub use smoothing::GaussianKernel;
pub use solver::{apply_t, Preconditioner, SolverConfig};
pub use tensor::{EedParams, Tensor2};
