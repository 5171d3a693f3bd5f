//! Experiment harness around [`budsec_core`]: instance files, seeded
//! instance generators, CSV reporting, the exact oracle suite, and the
//! implementations behind the `budsec` command-line tool.

pub mod commands;
pub mod config;
pub mod formats;
pub mod generator;
pub mod oracle;
pub mod report;

/// Process exit codes used by the CLI: success, property failure
/// (feasibility violation, failed audit, failed oracle), and I/O or
/// configuration errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok,
    PropertyFailure,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::PropertyFailure => 2,
            ExitStatus::ConfigError => 3,
        }
    }
}
