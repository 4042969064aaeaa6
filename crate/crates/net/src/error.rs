use std::io;

use thiserror::Error;

use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("no probes returned")]
    NoProbes,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Age(#[from] aoi_core::AoiError),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;
