use std::fmt;

use uadx::annotation::AnnotationError;
use uadx::data::DataError;
use uadx::experiments::ExperimentError;
use uadx::gateway::GatewayError;
use uadx::jsonl::JsonlError;
use uadx::metrics::MetricError;
use uadx::review::ReviewError;
use uadx::taskgen::TaskgenError;
use uadx::uncertainty::MaskError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_TRANSPORT: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad input, configuration or usage.
    Validation(String),
    /// The model endpoint could not be used.
    Transport(String),
    /// A run stopped after too many failures; partial results were kept.
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Transport(_) => EXIT_TRANSPORT,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Transport(m) => write!(f, "endpoint error: {m}"),
            CliError::Partial(m) => write!(f, "partial results: {m}"),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::InvalidRequest(_) | GatewayError::Cache(_) => CliError::Validation(e.to_string()),
            _ => CliError::Transport(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Transport { .. } => CliError::Transport(e.to_string()),
            ExperimentError::PartialResults { .. } => CliError::Partial(e.to_string()),
            ExperimentError::Gateway(g) => g.into(),
            ExperimentError::Metric(MetricError::Embedding(g)) => g.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Transport(g) => g.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}

validation_errors!(DataError, JsonlError, MaskError, TaskgenError, ReviewError, std::io::Error);

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Embedding(g) => g.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}
