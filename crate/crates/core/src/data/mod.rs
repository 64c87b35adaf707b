//! Data plumbing: synthetic motion generation, pose file I/O, and
//! sliding-window batching.

mod posefile;
mod synthetic;
mod windows;

pub use posefile::{load, save, POSEFILE_VERSION};
pub use synthetic::{generate, DropoutMode, SequencePair, SyntheticSpec};
pub use windows::{collect_windows, sequence_windows, split_pairs, TrainingWindow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported pose file version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("invalid specification: {0}")]
    Validation(String),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}
