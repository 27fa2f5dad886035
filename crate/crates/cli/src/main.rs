//! `lact`: phantoms, simulated scans, reconstruction and evaluation for
//! limited-angle CT.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BeamKind, GeometryCfg, IoCfg, Method, MethodCfg, NoiseCfg, Settings, Units};
use error::CliError;

#[derive(Parser)]
#[command(name = "lact", version, about = "Limited-angle CT simulation, reconstruction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom image
    Phantom(PhantomArgs),
    /// Project a phantom and apply the detector noise model
    Simulate(SimulateArgs),
    /// Reconstruct an image from a sinogram
    Reconstruct(ReconstructArgs),
    /// Compare an image against a reference
    Evaluate(EvaluateArgs),
    /// Write the missing-wedge frequency mask of a geometry
    Mask(MaskArgs),
    /// Render a LACT1 file as PNG
    Render(RenderArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// shepp-logan or ellipse-cardiac
    #[arg(long, default_value = "shepp-logan")]
    kind: String,
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Seed for randomized phantoms
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pixel size in mm
    #[arg(long, default_value_t = 1.0)]
    pixel_size: f64,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args, Default)]
struct GeometryArgs {
    #[arg(long, value_enum)]
    beam: Option<BeamKind>,
    /// Image side length in pixels
    #[arg(long)]
    size: Option<usize>,
    /// mm
    #[arg(long)]
    pixel_size: Option<f64>,
    /// degrees
    #[arg(long)]
    angle_start: Option<f64>,
    /// degrees (exclusive)
    #[arg(long)]
    angle_end: Option<f64>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    n_det: Option<usize>,
    /// mm for parallel beams, radians for fan beams
    #[arg(long)]
    det_spacing: Option<f64>,
    /// FOV radius in mm
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long)]
    src_to_origin: Option<f64>,
    #[arg(long)]
    src_to_det: Option<f64>,
}

impl GeometryArgs {
    fn cfg(&self) -> GeometryCfg {
        GeometryCfg {
            beam: self.beam,
            size: self.size,
            pixel_size: self.pixel_size,
            angle_start: self.angle_start,
            angle_end: self.angle_end,
            views: self.views,
            n_det: self.n_det,
            det_spacing: self.det_spacing,
            fov: self.fov,
            src_to_origin: self.src_to_origin,
            src_to_det: self.src_to_det,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Phantom image (normalized units)
    #[arg(long)]
    phantom: Option<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Incident photons per ray
    #[arg(long)]
    i0: Option<f64>,
    /// Electronic noise std in counts
    #[arg(long)]
    sigma_e: Option<f64>,
    /// Count floor before the log
    #[arg(long)]
    epsilon: Option<f64>,
    /// Exact line integrals, no noise
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Normalized-to-attenuation map
    #[arg(long, value_enum)]
    units: Option<Units>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    sinogram: Option<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// ram-lak, shepp-logan or hann
    #[arg(long)]
    filter: Option<String>,
    /// TV weight (attenuation units)
    #[arg(long)]
    lambda: Option<f64>,
    /// PDHG-TV iterations
    #[arg(long)]
    iters: Option<usize>,
    /// Reverse diffusion steps
    #[arg(long)]
    steps: Option<usize>,
    /// PDHG iterations per diffusion step
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Fusion window as fractions of the step count, e.g. 0.4,0.8
    #[arg(long, value_delimiter = ',', num_args = 2)]
    ff_window: Option<Vec<f64>>,
    #[arg(long)]
    no_fusion: bool,
    /// Weight the FBP spectrum by (1 - M) during fusion
    #[arg(long)]
    complement_lact: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable all noise injection in the sampler
    #[arg(long)]
    deterministic: bool,
    /// oracle, zero or gmm:<prior.toml>
    #[arg(long)]
    score: Option<String>,
    /// Std of seeded noise added to the score
    #[arg(long)]
    score_noise: Option<f64>,
    /// Start PDHG stages from x = 0, x̄ = x'
    #[arg(long)]
    literal_warm_start: bool,
    #[arg(long, value_enum)]
    units: Option<Units>,
    /// Ground truth (normalized units); required by the oracle score
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-step (psdm) or per-iteration (pdhg-tv) CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics JSON, needs --reference
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    png: Option<PathBuf>,
    /// PNG display window, e.g. 0,1
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Concurrent runs when the config lists several
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Data range for PSNR/SSIM and the histogram upper bound
    #[arg(long, default_value_t = 1.0)]
    range: f64,
    /// Report path; printed to stdout otherwise
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the local SSIM map as LACT1
    #[arg(long)]
    ssim_map: Option<PathBuf>,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Display window lo,hi; images default to 0,1, other kinds to their range
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
}

fn pair(v: &Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.as_ref().map(|v| [v[0], v[1]])
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

fn load_layers(config: &Option<PathBuf>, flags: Settings) -> Result<Vec<Settings>, CliError> {
    match config {
        Some(path) => Ok(config::ConfigFile::load(path)?.layered(flags)),
        None => Ok(vec![flags]),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Phantom(a) => commands::phantom(&a.kind, a.size, a.seed, a.pixel_size, &a.output, a.png.as_deref()),
        Command::Simulate(a) => {
            let flags = Settings {
                units: a.units,
                geometry: a.geometry.cfg(),
                noise: NoiseCfg {
                    enabled: a.noiseless.then_some(false),
                    i0: a.i0,
                    sigma_e: a.sigma_e,
                    epsilon: a.epsilon,
                    seed: a.seed,
                },
                io: IoCfg { phantom: a.phantom, output: a.output, ..Default::default() },
                ..Default::default()
            };
            let layers = load_layers(&a.config, flags)?;
            layers.iter().try_for_each(commands::simulate)
        }
        Command::Reconstruct(a) => {
            let flags = Settings {
                units: a.units,
                geometry: a.geometry.cfg(),
                method: MethodCfg {
                    name: a.method,
                    filter: a.filter,
                    lambda: a.lambda,
                    iters: a.iters,
                    steps: a.steps,
                    inner: a.inner,
                    snr: a.snr,
                    sigma_min: a.sigma_min,
                    sigma_max: a.sigma_max,
                    ff_window: pair(&a.ff_window),
                    ff_enabled: a.no_fusion.then_some(false),
                    complement_lact: flag(a.complement_lact),
                    seed: a.seed,
                    deterministic: flag(a.deterministic),
                    score: a.score,
                    score_noise: a.score_noise,
                    literal_warm_start: flag(a.literal_warm_start),
                },
                io: IoCfg {
                    sinogram: a.sinogram,
                    reference: a.reference,
                    output: a.output,
                    trace: a.trace,
                    metrics: a.metrics,
                    png: a.png,
                    window: pair(&a.window),
                    ..Default::default()
                },
                ..Default::default()
            };
            let layers = load_layers(&a.config, flags)?;
            commands::reconstruct_all(&layers, a.jobs)
        }
        Command::Evaluate(a) => commands::evaluate(&a.image, &a.reference, a.range, a.output.as_deref(), a.ssim_map.as_deref()),
        Command::Mask(a) => {
            let flags = Settings { geometry: a.geometry.cfg(), ..Default::default() };
            let layers = load_layers(&a.config, flags)?;
            commands::mask(&layers[0], &a.output, a.png.as_deref())
        }
        Command::Render(a) => commands::render(&a.input, &a.output, pair(&a.window)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lact: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Run 'lact --help' for usage.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
