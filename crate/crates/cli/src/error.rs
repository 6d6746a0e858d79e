use std::fmt;
use std::path::Path;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_STARTUP: u8 = 3;
pub const EXIT_RUN: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }

    pub fn startup(message: impl fmt::Display) -> Self {
        Self { code: EXIT_STARTUP, message: message.to_string() }
    }

    pub fn run(message: impl fmt::Display) -> Self {
        Self { code: EXIT_RUN, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Writes `contents`, creating parent directories. Failures are input errors.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
