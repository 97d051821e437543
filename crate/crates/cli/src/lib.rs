//! Experiment runner behind the `glwalk` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::fmt;

use glwalk_core::Error;

pub use commands::{run, Command, RunArgs};
pub use config::ExperimentConfig;
pub use output::{Manifest, OutputDir};

/// Error classes with their exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Runtime,
    Config,
    Schema,
    Budget,
    DegenerateVariance,
    NoiseDominated,
    Io,
}

impl ErrorKind {
    pub fn code(self) -> i32 {
        match self {
            ErrorKind::Runtime | ErrorKind::Io => 1,
            ErrorKind::Config | ErrorKind::Schema => 2,
            ErrorKind::Budget => 3,
            ErrorKind::DegenerateVariance => 4,
            ErrorKind::NoiseDominated => 5,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorKind::Runtime => "runtime",
            ErrorKind::Config => "config",
            ErrorKind::Schema => "schema",
            ErrorKind::Budget => "budget",
            ErrorKind::DegenerateVariance => "degenerate_variance",
            ErrorKind::NoiseDominated => "noise_dominated",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, message)
    }

    pub fn code(&self) -> i32 {
        self.kind.code()
    }

    /// `glwalk-error kind=<tag> code=<n> message="<escaped>"`
    pub fn stderr_line(&self) -> String {
        let msg: String = self.message.chars().flat_map(|c| c.escape_default()).collect();
        format!("glwalk-error kind={} code={} message=\"{msg}\"", self.kind.tag(), self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.tag(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidEnsemble(_) | Error::InvalidArgument(_) | Error::InsufficientGrid(_) => ErrorKind::Config,
            Error::SingularEnsemble { .. } => ErrorKind::Runtime,
            Error::Budget { .. } => ErrorKind::Budget,
            Error::DegenerateVariance(_) => ErrorKind::DegenerateVariance,
            Error::NoiseDominated { .. } => ErrorKind::NoiseDominated,
            Error::Schema(_) => ErrorKind::Schema,
            Error::Io(_) => ErrorKind::Io,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::from(Error::Budget { requested: 2, budget: 1 }).code(), 3);
        assert_eq!(CliError::from(Error::DegenerateVariance("s".into())).code(), 4);
        assert_eq!(CliError::from(Error::NoiseDominated { ns: vec![8] }).code(), 5);
        assert_eq!(CliError::from(Error::InvalidArgument("paths".into())).code(), 2);
    }

    #[test]
    fn stderr_line_is_one_line() {
        let e = CliError::config("bad\nvalue \"x\"");
        let line = e.stderr_line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("glwalk-error kind=config code=2 message=\""));
        assert!(line.contains("\\n"));
    }
}
