//! Load-profile ingestion, synthetic households, dataset splits and
//! checkpoint persistence.

mod checkpoint;
mod csv_io;
mod resample;
mod split;
mod synth;

pub use checkpoint::{load_params, save_params, Block, BlockData, Checkpoint, Persist, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use csv_io::{load_csv, read_csv, write_csv, LoadCsvRecord};
pub use resample::{resample_to_episodes, ResampleReport};
pub use split::{split_dataset, DatasetSplit};
pub use synth::{generate_synthetic, OccupancyPeriod, SynthGenConfig};

pub use crate::env::LoadEpisode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {reason}")]
    Parse { line: u64, column: usize, reason: String },
    #[error("timestamps not strictly increasing: line {previous_line} and line {line}")]
    NonMonotone { previous_line: u64, line: u64 },
    #[error("need at least {needed} episodes to split, got {got}")]
    TooFewEpisodes { needed: usize, got: usize },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint block {0:?} missing")]
    MissingBlock(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
