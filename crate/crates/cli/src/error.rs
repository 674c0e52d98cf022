use thiserror::Error;
use ultralap::bvp::BvpError;
use ultralap::heat::HeatError;
use ultralap::schottky::SchottkyError;
use ultralap::spectral::SpectralError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("initial data is nonzero on leaves outside the region: {0:?}")]
    UnsupportedInitialData(Vec<usize>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<BvpError> for CliError {
    fn from(e: BvpError) -> Self {
        match e {
            BvpError::Heat(h) => CliError::Heat(h),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Spectral(e) => spectral_code(e),
            CliError::Heat(HeatError::AbsorbingState(_)) => 3,
            CliError::Heat(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::UnsupportedInitialData(_) => 4,
            CliError::Io(_) | CliError::Internal(_) => 5,
        }
    }
}

fn spectral_code(e: &SpectralError) -> i32 {
    match e {
        SpectralError::Schottky(
            SchottkyError::Divergence { .. } | SchottkyError::Budget { .. },
        )
        | SpectralError::PartitionTooCoarse { .. }
        | SpectralError::XDependence { .. }
        | SpectralError::OrbitBlockXDependence { .. } => 3,
        _ => 2,
    }
}
