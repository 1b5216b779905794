use std::fmt;

/// A failure split into the two exit codes the CLI reports.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, flags or data. Exit code 1.
    User(String),
    /// A bug or an invariant violation. Exit code 2.
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    /// One JSON object on one line.
    pub fn machine_line(&self) -> String {
        let (kind, msg) = match self {
            CliError::User(m) => ("user", m),
            CliError::Internal(m) => ("internal", m),
        };
        serde_json::json!({ "error": kind, "code": self.exit_code(), "message": msg }).to_string()
    }

    pub fn context(self, ctx: &str) -> Self {
        match self {
            CliError::User(m) => CliError::User(format!("{ctx}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{ctx}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<spatpomp::Error> for CliError {
    fn from(e: spatpomp::Error) -> Self {
        match e {
            spatpomp::Error::Internal(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
