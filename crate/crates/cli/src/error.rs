use lact_core::diffusion::DiffusionError;
use lact_core::fusion::FusionError;
use lact_core::io::IoError;
use lact_core::metrics::MetricsError;
use lact_core::pipeline::PipelineError;
use lact_core::simulate::SimulateError;
use lact_core::tomo::TomoError;
use lact_core::variational::VariationalError;

/// Usage errors exit with 1, runtime errors with 2 and name the module that
/// failed.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime { module: &'static str, message: String },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime { .. } => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime { module, message } => write!(f, "error in {module}: {message}"),
        }
    }
}

fn runtime(module: &'static str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime { module, message: e.to_string() }
}

impl From<TomoError> for CliError {
    fn from(e: TomoError) -> Self {
        runtime("tomo_core", e)
    }
}

impl From<VariationalError> for CliError {
    fn from(e: VariationalError) -> Self {
        match e {
            VariationalError::Tomo(t) => t.into(),
            other => runtime("variational", other),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        runtime("diffusion", e)
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        runtime("fusion", e)
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Tomo(t) => t.into(),
            other => runtime("simulate", other),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        runtime("metrics", e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Tomo(t) => t.into(),
            PipelineError::Variational(v) => v.into(),
            PipelineError::Diffusion(d) => d.into(),
            PipelineError::Fusion(f) => f.into(),
            other => runtime("pipeline", other),
        }
    }
}

/// LACT1 and file handling belong to the command-line layer.
impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        runtime("cli", e)
    }
}
