use thiserror::Error;

/// Exit code when every check ran and at least one failed.
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(.message, .line, .column))]
    Config {
        message: String,
        /// Dotted key path of the offending entry, when known.
        key: Option<String>,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error(transparent)]
    Solver(#[from] nsfde_core::Error),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Usage(String),
}

fn config_message(message: &str, line: &Option<usize>, column: &Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: {message}"),
        (Some(l), None) => format!("line {l}: {message}"),
        _ => message.to_string(),
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
            CliError::Usage(_) => "usage",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind().into());
        obj.insert("message".into(), self.to_string().into());
        obj.insert("exit_code".into(), self.exit_code().into());
        if let CliError::Config { key, line, column, .. } = self {
            if let Some(k) = key {
                obj.insert("key".into(), k.clone().into());
            }
            if let Some(l) = line {
                obj.insert("line".into(), (*l).into());
            }
            if let Some(c) = column {
                obj.insert("column".into(), (*c).into());
            }
        }
        serde_json::Value::Object(obj).to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
