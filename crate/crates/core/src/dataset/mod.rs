//! Audio ingestion and dataset bookkeeping: WAV decoding, resampling,
//! length normalization, metadata indexing, splits and class weights.

mod audio;
mod metadata;
mod resample;
mod split;

pub use audio::{fix_length, load_wav, AudioClip};
pub use metadata::{load_metadata, read_metadata, ClassLabel, DatasetIndex, IndexEntry};
pub use resample::{resample, KAISER_BETA, TAPS_PER_PHASE};
pub use split::{class_weights, split_dataset, split_sizes, SplitAssignment, SplitTag};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("metadata schema error: {0}")]
    Schema(String),
    #[error("row {row}: class id {value:?} is not in 0..=9")]
    Label { row: usize, value: String },
    #[error("unsupported audio format: {0}")]
    Format(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
