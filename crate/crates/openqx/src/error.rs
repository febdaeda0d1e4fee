use std::fmt;

/// A configuration problem, located as precisely as the document allows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path such as `spectral.width`.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] openqx_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for anything the user can fix in the config, 3 for numerical or
    /// IO failures. Tolerance failures exit with 2 through [`crate::Outcome`].
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(openqx_core::Error::Invalid(_) | openqx_core::Error::Domain { .. }) => 1,
            _ => 3,
        }
    }
}
