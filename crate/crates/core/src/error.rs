use thiserror::Error;

use crate::nn::NnError;
use crate::symlang::SymlangError;
use crate::tfr::TfrError;
use crate::waveform::WaveformError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Tfr(#[from] TfrError),
    #[error(transparent)]
    Symlang(#[from] SymlangError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training: {0}")]
    Train(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
