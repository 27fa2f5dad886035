//! Score-based reconstruction loop: reverse diffusion steps alternated with
//! Fourier wedge fusion and PDHG-TV data consistency.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{corrector_step, predictor_step, DiffusionError, NoiseSchedule, ScoreFunction};
use crate::fusion::{build_missing_wedge_mask, fourier_fuse_with, FrequencyMask, FusionError};
use crate::metrics::psnr;
use crate::tomo::{
    fbp, operator_norm, ForwardOp, Image, ImageGrid, NormTarget, RampFilter, ScanGeometry, Sinogram, TomoError, UnitMap,
    UnitSpace,
};
use crate::variational::{default_lambda, PdhgParams, PdhgSolver, VariationalError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("NonFinite: outer step {step}, inner iteration {iteration}")]
    NonFinite { step: usize, iteration: usize },
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsdmConfig {
    pub sched: NoiseSchedule,
    /// PDHG iterations per outer step; 0 disables data consistency.
    pub inner_iters: usize,
    /// TV weight in attenuation units; `None` picks [`default_lambda`] from
    /// the FBP image.
    pub lambda: Option<f64>,
    pub snr: f64,
    /// Fusion runs while the count of completed reverse steps `k` satisfies
    /// `lo·I ≤ k ≤ hi·I`.
    pub ff_window: (f64, f64),
    pub ff_enabled: bool,
    /// Weight the FBP spectrum by `1 − M` instead of adding all of it.
    pub complement_lact: bool,
    pub seed: u64,
    /// No noise in the predictor and no corrector steps.
    pub deterministic: bool,
    /// Filter for the limited-angle FBP image used in fusion.
    pub fbp_filter: RampFilter,
    /// Diffusion runs in normalized units, PDHG in attenuation units.
    pub unit_map: UnitMap,
    /// Start each PDHG stage from `x = 0, x̄ = x′` and hand `x̄` onward,
    /// instead of starting both at `x′` and handing `x` onward.
    pub literal_warm_start: bool,
    pub norm_tol: f64,
    pub norm_max_iter: usize,
}

impl Default for PsdmConfig {
    fn default() -> Self {
        Self {
            sched: NoiseSchedule::default(),
            inner_iters: 30,
            lambda: None,
            snr: 0.16,
            ff_window: (0.4, 0.8),
            ff_enabled: true,
            complement_lact: false,
            seed: 0,
            deterministic: false,
            fbp_filter: RampFilter::Hann,
            unit_map: UnitMap::SHEPP_LOGAN,
            literal_warm_start: false,
            norm_tol: 1e-6,
            norm_max_iter: 2000,
        }
    }
}

impl PsdmConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sched.validate()?;
        let (lo, hi) = self.ff_window;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!("fusion window ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(PipelineError::InvalidConfig(format!("lambda {l} must be positive")));
            }
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(PipelineError::InvalidConfig(format!("snr {} must be nonnegative", self.snr)));
        }
        if !(self.unit_map.scale != 0.0 && self.unit_map.scale.is_finite()) {
            return Err(PipelineError::InvalidConfig("unit map scale must be nonzero".into()));
        }
        Ok(())
    }

    /// Inclusive range of completed-step counts at which fusion runs.
    pub fn fusion_steps(&self) -> (usize, usize) {
        let n = self.sched.n_steps as f64;
        let lo = (self.ff_window.0 * n - 1e-9).ceil().max(0.0) as usize;
        let hi = (self.ff_window.1 * n + 1e-9).floor() as usize;
        (lo, hi)
    }

    fn fuses_at(&self, completed: usize) -> bool {
        let (lo, hi) = self.fusion_steps();
        self.ff_enabled && lo <= completed && completed <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Noise-level index `i`, from `I − 1` down to 0.
    pub step: usize,
    /// `‖Ax − y‖ / ‖y‖` after the data-consistency stage.
    pub residual: f64,
    /// PSNR of the normalized iterate against the reference, range 1.
    pub psnr_db: Option<f64>,
    pub fused: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsdmTrace {
    pub steps: Vec<StepRecord>,
    pub fuse_calls: usize,
    pub op_norm: f64,
    pub lambda: f64,
}

impl PsdmTrace {
    pub fn final_residual(&self) -> Option<f64> {
        self.steps.last().map(|s| s.residual)
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,residual,psnr_db,fused")?;
        for s in &self.steps {
            let p = s.psnr_db.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(out, "{},{:e},{},{}", s.step, s.residual, p, s.fused as u8)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Starting point `x ~ N(0, σ_max² I)` in normalized units.
pub fn initial_sample(cfg: &PsdmConfig, grid: ImageGrid) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = (0..grid.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.sched.sigma_max * z
        })
        .collect();
    Image::new(grid.width, grid.height, grid.pixel_size, data)
        .expect("finite draw")
        .with_units(UnitSpace::Normalized)
}

fn relative_residual(op: &ForwardOp, x: &Image, y: &Sinogram) -> Result<f64, TomoError> {
    let ax = op.forward(x)?;
    let r = ax.data.iter().zip(&y.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let yn = y.norm();
    Ok(if yn > 0.0 { r / yn } else { r })
}

/// Runs the full reverse chain on measurement `y` and returns the final image
/// in attenuation units (zero outside the FOV) with a per-step trace.
///
/// Step `i = I−1 … 0`: a predictor step from level `i` to `i − 1` and a
/// corrector step at level `i − 1` (none at `i = 0`), Fourier fusion with the
/// FBP image inside the window, then `inner_iters` PDHG-TV iterations from
/// zero duals. `reference` (normalized units) enables per-step PSNR.
pub fn psdm_reconstruct<S: ScoreFunction + ?Sized>(
    y: &Sinogram,
    geom: &ScanGeometry,
    grid: ImageGrid,
    score: &S,
    cfg: &PsdmConfig,
    reference: Option<&Image>,
) -> Result<(Image, PsdmTrace), PipelineError> {
    cfg.validate()?;
    geom.check_grid(&grid)?;
    if y.n_angles != geom.n_angles() || y.n_det != geom.n_det() {
        return Err(TomoError::GeometryMismatch(format!(
            "sinogram is {}x{}, geometry expects {}x{}",
            y.n_angles,
            y.n_det,
            geom.n_angles(),
            geom.n_det()
        ))
        .into());
    }
    if let Some(r) = reference {
        if r.width != grid.width || r.height != grid.height {
            return Err(PipelineError::InvalidConfig("reference does not match the image grid".into()));
        }
    }
    let map = cfg.unit_map;
    let op = ForwardOp::Tomography(geom);

    let x_lact_att = fbp(y, geom, cfg.fbp_filter, grid)?;
    let x_lact = map.to_normalized(&x_lact_att);
    let mask: Option<FrequencyMask> = if cfg.ff_enabled { Some(build_missing_wedge_mask(geom, grid)?) } else { None };

    let op_norm = operator_norm(NormTarget::Combined(op), grid, cfg.norm_tol, cfg.norm_max_iter, cfg.seed)?.value;
    let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(y, &x_lact_att));
    let params = PdhgParams::from_norm(op_norm, lambda, cfg.inner_iters.max(1));
    let solver = PdhgSolver::new(op, y, grid, params)?;
    log::debug!("psdm: L = {op_norm:.4e}, lambda = {lambda:.4e}");

    let sched = &cfg.sched;
    let n = sched.n_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut x = initial_sample(cfg, grid);
    let mut trace = PsdmTrace { op_norm, lambda, ..Default::default() };

    for i in (0..n).rev() {
        // (a) reverse diffusion
        let mut x_dn = x;
        if i >= 1 {
            let mut v = predictor_step(&x_dn.data, score, i, sched, &mut rng, !cfg.deterministic)?;
            if !cfg.deterministic {
                v = corrector_step(&v, score, i - 1, sched, &mut rng, cfg.snr)?;
            }
            x_dn.data = v;
        }
        if !x_dn.is_finite() {
            return Err(PipelineError::NonFinite { step: i, iteration: 0 });
        }

        // (b) Fourier fusion
        let completed = n - 1 - i;
        let fused = cfg.fuses_at(completed);
        let x_prime = match (&mask, fused) {
            (Some(m), true) => {
                trace.fuse_calls += 1;
                fourier_fuse_with(&x_dn, &x_lact, m, cfg.complement_lact)?
            }
            _ => x_dn,
        };

        // (c) data consistency
        let residual;
        if cfg.inner_iters > 0 {
            let warm = map.to_attenuation(&x_prime);
            let mut st = if cfg.literal_warm_start {
                solver.init(Image::zeros(grid), warm)?
            } else {
                solver.init_warm(Some(&warm))?
            };
            let diag = solver.run(&mut st).map_err(|e| match e {
                VariationalError::NonFinite { iteration } => PipelineError::NonFinite { step: i, iteration },
                other => other.into(),
            })?;
            let out = if cfg.literal_warm_start { st.x_bar } else { st.x };
            residual = if cfg.literal_warm_start {
                relative_residual(&op, &out, y)?
            } else {
                diag.last().map(|r| r.residual).unwrap_or(f64::NAN)
            };
            x = map.to_normalized(&out);
        } else {
            x = x_prime;
            residual = relative_residual(&op, &map.to_attenuation(&x), y)?;
        }

        let psnr_db = match reference {
            Some(r) => Some(psnr(&x, r, 1.0).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?),
            None => None,
        };
        trace.steps.push(StepRecord { step: i, residual, psnr_db, fused });
        log::trace!("psdm step {i}: residual {residual:.3e}");
    }

    let mut out = map.to_attenuation(&x);
    out.mask_outside(geom.fov_radius());
    Ok((out, trace))
}
