use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] trafficrl::Error),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("no result rows to report")]
    EmptyReport,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("agent config: {0}")]
    Config(#[from] toml::de::Error),
}

impl BenchError {
    /// 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Invalid(_) | BenchError::EmptyReport | BenchError::Config(_) => 2,
            BenchError::Core(e) => match e {
                trafficrl::Error::InvalidArgument(_)
                | trafficrl::Error::Parse(_)
                | trafficrl::Error::Version { .. } => 2,
                _ => 3,
            },
            _ => 3,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}
