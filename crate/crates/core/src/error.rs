// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Retryable: the replay buffer does not yet hold enough adjacent pairs.
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("{path}:{line}: {message}")]
    ConfigSyntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::NotReady(_))
    }

    /// True for errors that originate in user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_) | Error::ConfigSyntax { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
