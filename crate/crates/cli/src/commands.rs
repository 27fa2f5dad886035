//! Subcommand bodies. Images on disk are in normalized units; the unit map
//! converts to attenuation around projection and reconstruction.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use lact_core::diffusion::{GmmScore, NoiseSchedule, NoisyScore, OracleScore, ScoreFunction, ZeroScore};
use lact_core::fusion::build_missing_wedge_mask;
use lact_core::io::{self, LactData};
use lact_core::metrics::{ssim_map, MetricsReport};
use lact_core::pipeline::psdm_reconstruct;
use lact_core::simulate::{make_phantom, simulate_measurement, PhantomKind, PhantomSpec};
use lact_core::tomo::{fbp, operator_norm, ForwardOp, NormTarget, RampFilter};
use lact_core::variational::{default_lambda, pdhg_tv, PdhgParams};
use lact_core::{Image, ImageGrid, ScanGeometry, Sinogram};
use rayon::prelude::*;

use crate::config::{GeometryCfg, Method, Settings, Units};
use crate::error::CliError;

/// PDHG-TV baseline iterations when none are given.
pub const DEFAULT_PDHG_ITERS: usize = 300;

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::usage(format!("missing {what}")))
}

fn window(w: Option<[f64; 2]>) -> (f64, f64) {
    w.map(|[a, b]| (a, b)).unwrap_or((0.0, 1.0))
}

pub fn phantom(kind: &str, size: usize, seed: u64, pixel_size: f64, output: &Path, png: Option<&Path>) -> Result<(), CliError> {
    let kind: PhantomKind = kind.parse().map_err(CliError::usage)?;
    let img = make_phantom(&PhantomSpec { kind, size, seed, pixel_size })?;
    io::write_image(&img, output)?;
    if let Some(p) = png {
        io::write_png(&img, (0.0, 1.0), p)?;
    }
    Ok(())
}

pub fn simulate(s: &Settings) -> Result<(), CliError> {
    let img = io::read_image(required(&s.io.phantom, "phantom (--phantom)")?)?;
    let output = required(&s.io.output, "output path (--output)")?;
    if img.width != img.height {
        return Err(CliError::usage("phantom must be square"));
    }
    // The grid follows the phantom unless the geometry pins it.
    let geometry = GeometryCfg {
        size: s.geometry.size.or(Some(img.width)),
        pixel_size: s.geometry.pixel_size.or(Some(img.pixel_size)),
        ..s.geometry.clone()
    };
    let (geom, grid) = geometry.resolve()?;
    if grid.width != img.width || (grid.pixel_size - img.pixel_size).abs() > 1e-9 * grid.pixel_size {
        return Err(CliError::usage(format!(
            "phantom grid {}x{} @ {} mm does not match geometry grid {}x{} @ {} mm",
            img.width, img.height, img.pixel_size, grid.width, grid.height, grid.pixel_size
        )));
    }
    let att = s.units.unwrap_or(Units::SheppLogan).map().to_attenuation(&img);
    let noise = s.noise.model();
    let y = simulate_measurement(&att, &geom, noise.as_ref(), s.noise.seed.unwrap_or(0))?;
    io::write_lact(&LactData::Sinogram(y, geom.det_spacing()), output)?;
    Ok(())
}

/// Runs every layer, at most `jobs` at a time. Output paths must be distinct.
pub fn reconstruct_all(layers: &[Settings], jobs: usize) -> Result<(), CliError> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let mut seen = HashSet::new();
    for l in layers {
        for p in [&l.io.output, &l.io.trace, &l.io.metrics, &l.io.png].into_iter().flatten() {
            if !seen.insert(p.clone()) {
                return Err(CliError::usage(format!("runs write the same path '{}'", p.display())));
            }
        }
    }
    if layers.len() == 1 || jobs == 1 {
        return layers.iter().try_for_each(reconstruct);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime { module: "cli", message: e.to_string() })?;
    let results: Vec<Result<(), CliError>> = pool.install(|| layers.par_iter().map(reconstruct).collect());
    results.into_iter().collect()
}

enum Score {
    Zero(ZeroScore),
    Oracle(OracleScore),
    Gmm(GmmScore),
}

impl Score {
    fn as_dyn(&self) -> &dyn ScoreFunction {
        match self {
            Score::Zero(s) => s,
            Score::Oracle(s) => s,
            Score::Gmm(s) => s,
        }
    }
}

fn build_score(spec: &str, sched: NoiseSchedule, grid: ImageGrid, reference: Option<&Image>) -> Result<Score, CliError> {
    match spec {
        "zero" => Ok(Score::Zero(ZeroScore)),
        "oracle" => {
            let r = reference.ok_or_else(|| CliError::usage("the oracle score needs --reference"))?;
            Ok(Score::Oracle(OracleScore { x_true: r.data.clone(), sched }))
        }
        s => match s.strip_prefix("gmm:") {
            Some(path) => {
                let prior = io::load_gmm_prior(Path::new(path))?;
                if prior.width != grid.width || prior.height != grid.height {
                    return Err(CliError::usage(format!(
                        "prior is {}x{}, image grid is {}x{}",
                        prior.width, prior.height, grid.width, grid.height
                    )));
                }
                Ok(Score::Gmm(GmmScore { prior, sched }))
            }
            None => Err(CliError::usage(format!("unknown score '{s}' (expected oracle, zero or gmm:<path>)"))),
        },
    }
}

fn load_sinogram(s: &Settings, geom: &ScanGeometry) -> Result<Sinogram, CliError> {
    let (y, spacing) = io::read_sinogram(required(&s.io.sinogram, "sinogram (--sinogram)")?)?;
    if y.n_angles != geom.n_angles() || y.n_det != geom.n_det() {
        return Err(CliError::usage(format!(
            "sinogram is {}x{}, geometry expects {} views x {} bins",
            y.n_angles,
            y.n_det,
            geom.n_angles(),
            geom.n_det()
        )));
    }
    // Stored spacing is f64; it must agree with the geometry it was made with.
    if (spacing - geom.det_spacing()).abs() > 1e-9 * geom.det_spacing().abs() {
        return Err(CliError::usage(format!(
            "sinogram bin spacing {spacing} differs from geometry spacing {}",
            geom.det_spacing()
        )));
    }
    Ok(y)
}

pub fn reconstruct(s: &Settings) -> Result<(), CliError> {
    let (geom, grid) = s.geometry.resolve()?;
    let y = load_sinogram(s, &geom)?;
    let output = required(&s.io.output, "output path (--output)")?;
    let units = s.units.unwrap_or(Units::SheppLogan).map();
    let reference = match &s.io.reference {
        Some(p) => {
            let r = io::read_image(p)?;
            if r.width != grid.width || r.height != grid.height {
                return Err(CliError::usage(format!(
                    "reference is {}x{}, image grid is {}x{}",
                    r.width, r.height, grid.width, grid.height
                )));
            }
            Some(r)
        }
        None => None,
    };
    if s.io.metrics.is_some() && reference.is_none() {
        return Err(CliError::usage("--metrics needs --reference"));
    }
    let m = &s.method;
    let att = match m.name.unwrap_or(Method::Psdm) {
        Method::Fbp => fbp(&y, &geom, m.filter(RampFilter::RamLak)?, grid)?,
        Method::PdhgTv => {
            let op = ForwardOp::Tomography(&geom);
            let lambda = match m.lambda {
                Some(l) => l,
                None => default_lambda(&y, &fbp(&y, &geom, m.filter(RampFilter::Hann)?, grid)?),
            };
            let l = operator_norm(NormTarget::Combined(op), grid, 1e-6, 2000, 0)?.value;
            let params = PdhgParams::from_norm(l, lambda, m.iters.unwrap_or(DEFAULT_PDHG_ITERS));
            let (mut x, diag) = pdhg_tv(&y, op, grid, params, None)?;
            x.mask_outside(geom.fov_radius());
            if let Some(t) = &s.io.trace {
                diag.write_csv(t).map_err(|e| CliError::Runtime { module: "cli", message: e.to_string() })?;
            }
            x
        }
        Method::Psdm => {
            let cfg = m.psdm(units)?;
            let score = build_score(m.score.as_deref().unwrap_or("oracle"), cfg.sched, grid, reference.as_ref())?;
            let (x, trace) = match m.score_noise {
                Some(std) if std > 0.0 => {
                    let noisy = NoisyScore { inner: score.as_dyn(), sched: cfg.sched, noise_std: std, seed: cfg.seed };
                    psdm_reconstruct(&y, &geom, grid, &noisy, &cfg, reference.as_ref())?
                }
                Some(std) if std < 0.0 || !std.is_finite() => {
                    return Err(CliError::usage("score noise must be nonnegative"));
                }
                _ => psdm_reconstruct(&y, &geom, grid, score.as_dyn(), &cfg, reference.as_ref())?,
            };
            if let Some(t) = &s.io.trace {
                trace.write_csv(t).map_err(|e| CliError::Runtime { module: "cli", message: e.to_string() })?;
            }
            x
        }
    };
    let img = units.to_normalized(&att);
    io::write_image(&img, output)?;
    if let (Some(p), Some(r)) = (&s.io.metrics, &reference) {
        let report = MetricsReport::compute(&io::quantize(&img), r, 1.0)?;
        io::write_atomic(p, report.to_json().as_bytes())?;
    }
    if let Some(p) = &s.io.png {
        io::write_png(&img, window(s.io.window), p)?;
    }
    Ok(())
}

pub fn evaluate(image: &Path, reference: &Path, range: f64, output: Option<&Path>, map: Option<&Path>) -> Result<(), CliError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(CliError::usage("--range must be positive"));
    }
    let a = io::read_image(image)?;
    let b = io::read_image(reference)?;
    let report = MetricsReport::compute(&a, &b, range)?;
    match output {
        Some(p) => io::write_atomic(p, report.to_json().as_bytes())?,
        None => {
            // A closed pipe (e.g. `| head`) is not an error.
            let mut out = std::io::stdout().lock();
            if let Err(e) = writeln!(out, "{}", report.to_json()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(CliError::Runtime { module: "cli", message: e.to_string() });
                }
            }
        }
    }
    if let Some(p) = map {
        io::write_image(&ssim_map(&a, &b, range)?, p)?;
    }
    Ok(())
}

pub fn mask(s: &Settings, output: &Path, png: Option<&Path>) -> Result<(), CliError> {
    let (geom, grid) = s.geometry.resolve()?;
    let mask = build_missing_wedge_mask(&geom, grid)?;
    io::write_mask(&mask, output)?;
    if let Some(p) = png {
        io::write_png(&mask.to_image(), (0.0, 1.0), p)?;
    }
    Ok(())
}

fn full_range(img: &Image) -> (f64, f64) {
    let (lo, hi) = img.min_max();
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Images default to the [0, 1] window; sinograms, field magnitudes and
/// log-magnitude spectra are stretched to their own range.
pub fn render(input: &Path, output: &Path, win: Option<[f64; 2]>) -> Result<(), CliError> {
    let data = io::read_lact(input)?;
    let is_image = matches!(data, LactData::Image(_));
    let img = match data {
        LactData::Image(img) => img,
        LactData::Sinogram(s, _) => Image::new(s.n_det, s.n_angles, 1.0, s.data)?,
        LactData::VectorField(vf, ps) => Image::new(vf.width, vf.height, ps, vf.magnitude())?,
        LactData::Complex(c) => Image::new(c.width, c.height, c.pixel_size, c.data.iter().map(|z| z.norm().ln_1p()).collect())?,
    };
    let w = match win {
        Some([a, b]) => (a, b),
        None if is_image => (0.0, 1.0),
        None => full_range(&img),
    };
    io::write_png(&img, w, output)?;
    Ok(())
}
