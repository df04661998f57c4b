//! Batch front end: configuration parsing, command implementations and the
//! mapping from outcomes to exit codes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] chsmc_core::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const VERIFICATION: i32 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use chsmc_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Numerical(E::Param(_) | E::Volume { .. } | E::Regime(_) | E::Mean { .. } | E::MissingData(_)) => {
                exit::CONFIG
            }
            CliError::Numerical(_) | CliError::Output(_) => exit::NUMERICAL,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    VerificationFailed,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Ok
        } else {
            Outcome::VerificationFailed
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => exit::OK,
            Outcome::VerificationFailed => exit::VERIFICATION,
        }
    }
}
