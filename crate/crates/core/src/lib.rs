//! Limited-angle CT reconstruction toolkit.
//!
//! The crate is organised around the reconstruction chain:
//!
//! - [`tomo`]: images, scan geometry, the Joseph projector with its matched
//!   adjoint, filtered backprojection and operator-norm estimation.
//! - [`variational`]: discrete gradient/divergence and the PDHG-TV solver.
//! - [`diffusion`]: VE noise schedule, score functions, DSM loss and the
//!   predictor-corrector sampler.
//! - [`fusion`]: centered DFT, missing-wedge masks and spectral fusion.
//! - [`pipeline`]: the alternating diffusion / fusion / data-consistency loop.
//! - [`simulate`]: phantoms and the mixed Poisson-Gaussian measurement model.
//! - [`metrics`]: PSNR, SSIM, histogram correlation and LBP texture distance.
//! - [`io`]: the LACT1 binary array format, PNG export and CSV writers.

pub mod diffusion;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod simulate;
pub mod tomo;
pub mod variational;

pub use tomo::{Image, ImageGrid, ScanGeometry, Sinogram, UnitMap, UnitSpace, VectorField};
