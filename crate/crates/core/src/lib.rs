//! Mixed-noise image denoising with infimal-convolution data fidelities.
//!
//! The TV-IC models remove combinations of salt & pepper + Gaussian and
//! Poisson + Gaussian noise from grayscale images by splitting the noise into
//! its two statistical components. Semismooth Newton solvers handle the
//! Huberised optimality systems; the classical single-fidelity models
//! (TV-L1, TV-L2, TV-L1-L2, TV-KL, TV-L2-KL, TV-GP) are included as
//! baselines, together with noise synthesis, quality metrics and the
//! asymptotics/parameter-learning experiment harnesses.

pub mod error;
pub mod experiments;
pub mod fidelity;
pub mod grid;
pub mod huber;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{DualField, ImageGrid};
pub use solvers::{SolveResult, SolverConfig};
