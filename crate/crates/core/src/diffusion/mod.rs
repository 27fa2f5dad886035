//! Variance-exploding diffusion: noise schedule, score functions, the
//! denoising score-matching loss and the predictor-corrector sampler.
//!
//! Grids are flat `f64` slices; the sampler never looks at their 2D shape.

mod dsm;
mod sampler;
mod schedule;
mod score;

pub use dsm::{dsm_loss, DsmEstimate};
pub use sampler::{corrector_step, pc_sample, predictor_step};
pub use schedule::{sigma_at, NoiseSchedule};
pub use score::{
    gmm_log_density, gmm_score, oracle_score, CountingScore, FnScore, GmmComponent, GmmPrior, GmmScore,
    NoisyScore, OracleScore, ScaledScore, ScoreFunction, ZeroScore,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("OutOfRange: diffusion time {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("IndexOutOfRange: step {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("InvalidSchedule: {0}")]
    InvalidSchedule(String),
    #[error("InvalidPrior: {0}")]
    InvalidPrior(String),
}
