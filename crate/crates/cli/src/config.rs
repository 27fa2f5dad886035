//! Experiment settings. Every field is optional so that a TOML file, a
//! `[[runs]]` entry and command-line flags can be layered; later layers win.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use lact_core::diffusion::NoiseSchedule;
use lact_core::pipeline::PsdmConfig;
use lact_core::simulate::NoiseModel;
use lact_core::tomo::{build_geometry, BeamSpec, RampFilter};
use lact_core::{ImageGrid, ScanGeometry, UnitMap};
use serde::Deserialize;

use crate::error::CliError;

/// `overlay(base, top)`: fields set in `top` replace those of `base`.
pub trait Overlay {
    fn overlay(self, top: Self) -> Self;
}

macro_rules! overlay_struct {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Overlay for $t {
            fn overlay(self, top: Self) -> Self {
                Self { $($f: top.$f.or(self.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BeamKind {
    Parallel,
    Fan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fbp,
    #[serde(alias = "pdhg_tv")]
    #[value(alias = "pdhg_tv")]
    PdhgTv,
    Psdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    SheppLogan,
    Cardiac,
}

impl Units {
    pub fn map(self) -> UnitMap {
        match self {
            Units::SheppLogan => UnitMap::SHEPP_LOGAN,
            Units::Cardiac => UnitMap::CARDIAC,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryCfg {
    pub beam: Option<BeamKind>,
    /// Image side length in pixels.
    pub size: Option<usize>,
    /// mm
    pub pixel_size: Option<f64>,
    /// degrees
    pub angle_start: Option<f64>,
    /// degrees
    pub angle_end: Option<f64>,
    pub views: Option<usize>,
    pub n_det: Option<usize>,
    /// mm (parallel) or radians (fan)
    pub det_spacing: Option<f64>,
    /// mm
    pub fov: Option<f64>,
    pub src_to_origin: Option<f64>,
    pub src_to_det: Option<f64>,
}
overlay_struct!(GeometryCfg { beam, size, pixel_size, angle_start, angle_end, views, n_det, det_spacing, fov, src_to_origin, src_to_det });

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseCfg {
    pub enabled: Option<bool>,
    pub i0: Option<f64>,
    pub sigma_e: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}
overlay_struct!(NoiseCfg { enabled, i0, sigma_e, epsilon, seed });

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodCfg {
    pub name: Option<Method>,
    pub filter: Option<String>,
    pub lambda: Option<f64>,
    /// PDHG-TV baseline iterations.
    pub iters: Option<usize>,
    /// Reverse diffusion steps `I`.
    pub steps: Option<usize>,
    /// PDHG iterations per diffusion step `N`.
    pub inner: Option<usize>,
    pub snr: Option<f64>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub ff_window: Option<[f64; 2]>,
    pub ff_enabled: Option<bool>,
    pub complement_lact: Option<bool>,
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    /// `oracle`, `zero` or `gmm:<prior.toml>`
    pub score: Option<String>,
    /// Std of the seeded noise added to the score.
    pub score_noise: Option<f64>,
    pub literal_warm_start: Option<bool>,
}
overlay_struct!(MethodCfg {
    name, filter, lambda, iters, steps, inner, snr, sigma_min, sigma_max, ff_window, ff_enabled,
    complement_lact, seed, deterministic, score, score_noise, literal_warm_start
});

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoCfg {
    pub phantom: Option<PathBuf>,
    pub sinogram: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub png: Option<PathBuf>,
    pub window: Option<[f64; 2]>,
}
overlay_struct!(IoCfg { phantom, sinogram, reference, output, trace, metrics, png, window });

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub units: Option<Units>,
    pub geometry: GeometryCfg,
    pub noise: NoiseCfg,
    pub method: MethodCfg,
    pub io: IoCfg,
}

impl Overlay for Settings {
    fn overlay(self, top: Self) -> Self {
        Self {
            units: top.units.or(self.units),
            geometry: self.geometry.overlay(top.geometry),
            noise: self.noise.overlay(top.noise),
            method: self.method.overlay(top.method),
            io: self.io.overlay(top.io),
        }
    }
}

/// Top-level file: shared settings plus optional independent runs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub base: Settings,
    pub runs: Vec<Settings>,
}

impl ConfigFile {
    /// Relative paths inside the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config '{}': {e}", path.display())))?;
        let mut file: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config '{}': {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.base.rebase(base);
        for r in &mut file.runs {
            r.rebase(base);
        }
        Ok(file)
    }

    /// One settings layer per run (the base alone when there are no runs),
    /// each topped with `flags`.
    pub fn layered(self, flags: Settings) -> Vec<Settings> {
        if self.runs.is_empty() {
            vec![self.base.overlay(flags)]
        } else {
            self.runs.into_iter().map(|r| self.base.clone().overlay(r).overlay(flags.clone())).collect()
        }
    }
}

impl Settings {
    fn rebase(&mut self, base: &Path) {
        self.io.rebase(base);
        if let Some(path) = self.method.score.as_deref().and_then(|s| s.strip_prefix("gmm:")) {
            if Path::new(path).is_relative() {
                self.method.score = Some(format!("gmm:{}", base.join(path).display()));
            }
        }
    }
}

impl IoCfg {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.phantom,
            &mut self.sinogram,
            &mut self.reference,
            &mut self.output,
            &mut self.trace,
            &mut self.metrics,
            &mut self.png,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub const DEFAULT_SIZE: usize = 128;

impl GeometryCfg {
    /// Scan geometry and image grid. Parallel defaults follow the image grid
    /// (`2·size` bins at the pixel pitch); fan defaults are the 835-bin
    /// scanner preset over a 500 mm FOV.
    pub fn resolve(&self) -> Result<(ScanGeometry, ImageGrid), CliError> {
        let size = self.size.unwrap_or(DEFAULT_SIZE);
        let start = self.angle_start.unwrap_or(0.0).to_radians();
        let end = self.angle_end.unwrap_or(180.0).to_radians();
        let views = self.views.unwrap_or(180);
        let (beam, ps, n_det, spacing, fov) = match self.beam.unwrap_or(BeamKind::Parallel) {
            BeamKind::Parallel => {
                let ps = self.pixel_size.unwrap_or(1.0);
                let n_det = self.n_det.unwrap_or(2 * size);
                let spacing = self.det_spacing.unwrap_or(ps);
                (BeamSpec::Parallel, ps, n_det, spacing, self.fov.unwrap_or(n_det as f64 * spacing / 2.0))
            }
            BeamKind::Fan => {
                let sdd = self.src_to_det.unwrap_or(946.7);
                let beam = BeamSpec::FanEquiangular { src_to_origin: self.src_to_origin.unwrap_or(538.52), src_to_det: sdd };
                let fov = self.fov.unwrap_or(250.0);
                let ps = self.pixel_size.unwrap_or(2.0 * fov / size as f64);
                (beam, ps, self.n_det.unwrap_or(835), self.det_spacing.unwrap_or(1.095 / sdd), fov)
            }
        };
        if end - start > 2.0 * PI + 1e-9 {
            return Err(CliError::usage("angular range exceeds 360 degrees"));
        }
        let geom = build_geometry(beam, start, end, views, n_det, spacing, fov)?;
        let grid = ImageGrid::square(size, ps);
        geom.check_grid(&grid)?;
        Ok((geom, grid))
    }
}

impl NoiseCfg {
    pub fn model(&self) -> Option<NoiseModel> {
        if !self.enabled.unwrap_or(true) {
            return None;
        }
        let d = NoiseModel::default();
        Some(NoiseModel {
            i0: self.i0.unwrap_or(d.i0),
            sigma_e: self.sigma_e.unwrap_or(d.sigma_e),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        })
    }
}

impl MethodCfg {
    pub fn filter(&self, default: RampFilter) -> Result<RampFilter, CliError> {
        match &self.filter {
            Some(s) => s.parse().map_err(CliError::usage),
            None => Ok(default),
        }
    }

    pub fn psdm(&self, units: UnitMap) -> Result<PsdmConfig, CliError> {
        let d = PsdmConfig::default();
        let sched = NoiseSchedule::new(
            self.sigma_min.unwrap_or(d.sched.sigma_min),
            self.sigma_max.unwrap_or(d.sched.sigma_max),
            self.steps.unwrap_or(d.sched.n_steps),
        )
        .map_err(|e| CliError::usage(e.to_string()))?;
        let cfg = PsdmConfig {
            sched,
            inner_iters: self.inner.unwrap_or(d.inner_iters),
            lambda: self.lambda,
            snr: self.snr.unwrap_or(d.snr),
            ff_window: self.ff_window.map(|[a, b]| (a, b)).unwrap_or(d.ff_window),
            ff_enabled: self.ff_enabled.unwrap_or(d.ff_enabled),
            complement_lact: self.complement_lact.unwrap_or(d.complement_lact),
            seed: self.seed.unwrap_or(d.seed),
            deterministic: self.deterministic.unwrap_or(d.deterministic),
            fbp_filter: self.filter(d.fbp_filter)?,
            unit_map: units,
            literal_warm_start: self.literal_warm_start.unwrap_or(d.literal_warm_start),
            norm_tol: d.norm_tol,
            norm_max_iter: d.norm_max_iter,
        };
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }
}
