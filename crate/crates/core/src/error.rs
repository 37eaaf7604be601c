// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors produced anywhere in the segmentation stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed MIDI file: {0}")]
    MalformedFile(String),
    #[error("unsupported MIDI file: {0}")]
    UnsupportedFormat(String),
    #[error("file contains {count} distinct tempo events; tempo changes are not supported")]
    TempoChange { count: usize },
    #[error("note CSV is missing required column `{0}`")]
    MissingColumn(String),
    #[error("note CSV row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("note index {index} out of range for a piece of {len} notes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("piece has {notes} notes but {required} are required")]
    TooFewNotes { notes: usize, required: usize },
    #[error("{notes} notes exceed the adjacency capacity limit of {limit}")]
    CapacityExceeded { notes: usize, limit: usize },
    #[error("matrix of dimension {0} is too small for a novelty curve (need at least 2)")]
    MatrixTooSmall(usize),
    #[error("empty segment [{start}, {end})")]
    EmptySegment { start: usize, end: usize },
    #[error("window {window} is too large for a signal of length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("segment SSM needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no segmentation paired with annotation `{0}`")]
    UnpairedFile(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("result table is empty")]
    EmptyTable,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
