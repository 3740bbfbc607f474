/// Errors surfaced by the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{row}: {msg}")]
    Parse {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("{path}:{row}: missing month {expected} (found {found})")]
    Gap {
        path: String,
        row: usize,
        expected: String,
        found: String,
    },

    #[error("{path}:{row}: months not strictly increasing ({prev} then {found})")]
    NonMonotone {
        path: String,
        row: usize,
        prev: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] forecast_core::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("all station/model runs failed")]
    AllRunsFailed,
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
