use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("expected mono audio, got {channels} channels in {path}")]
    NotMono { channels: u16, path: PathBuf },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario rejection sampling exceeded {0} attempts (infeasible config)")]
    SamplingExhausted(usize),

    #[error("source and microphone coincide")]
    CoincidentSourceMic,

    #[error("speech corpus is empty or missing: {0}")]
    EmptyCorpus(String),

    #[error("corpus too small: need {need} distinct recordings, have {have}")]
    CorpusTooSmall { need: usize, have: usize },

    #[error("not a model file (bad magic)")]
    NotAModelFile,

    #[error("model format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model parameter count mismatch: file has {found}, expected {expected}")]
    ParamCountMismatch { found: u64, expected: u64 },

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("model config error: {0}")]
    BadModelConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(String),
}

pub type Result<T> = std::result::Result<T, Error>;
