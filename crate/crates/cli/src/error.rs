use std::fmt;

/// Process exit codes. Scripts depend on these values.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const INTEGRITY: i32 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: msg.into(),
        }
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Self {
            code: exit::INTEGRITY,
            message: msg.into(),
        }
    }

    /// Validation error for a nested config field: `prefix.field must ...`.
    pub fn field(prefix: &str, e: flowdj::Error) -> Self {
        match e {
            flowdj::Error::InvalidArgument(msg) => Self::usage(format!("{prefix}.{msg}")),
            other => Self::from(other).context(prefix),
        }
    }

    /// Prefixes the message with some context, keeping the exit code.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<flowdj::Error> for CliError {
    fn from(e: flowdj::Error) -> Self {
        use flowdj::Error as E;
        let code = match &e {
            E::TrainingDiverged { .. }
            | E::IntegrationDiverged { .. }
            | E::DegenerateGridPoint { .. } => exit::NUMERIC,
            E::CorruptCheckpoint(_) => exit::INTEGRITY,
            _ => exit::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
