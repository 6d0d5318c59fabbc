//! Exit statuses, following the BSD sysexits convention.

use std::fmt;
use std::process::ExitCode;

/// A metric has no defined value for the input.
pub const UNDEFINED: u8 = 2;
pub const USAGE: u8 = 64;
pub const DATA: u8 = 65;
pub const NO_INPUT: u8 = 66;
pub const SOFTWARE: u8 = 70;
pub const IO: u8 = 74;
pub const CONFIG: u8 = 78;

/// An error with the status the process should exit with.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn msg(code: u8, message: impl fmt::Display) -> Self {
        Self::new(code, anyhow::anyhow!("{message}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Attach an exit status to any error.
pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> CliResult<T>;
    fn or_exit_with(self, code: u8, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, e))
    }

    fn or_exit_with(self, code: u8, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, e.into().context(context())))
    }
}
