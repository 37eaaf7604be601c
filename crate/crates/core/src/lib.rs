// SPDX-License-Identifier: MIT OR Apache-2.0

//! Structural segmentation of symbolic music.
//!
//! Notes become a graph, the graph's adjacency matrix yields a novelty curve,
//! and changepoint detection on that curve places section boundaries. A
//! feature-normalization method and a boundary scorer are included.
//!
//! ```
//! use symseg::{g_pelt, Note, Piece, TimingContext};
//!
//! let notes: Vec<Note> = (0..40u64).map(|i| Note::new(60 + (i % 5) as u8, i * 480, i * 480 + 480)).collect();
//! let piece = Piece::new(notes, TimingContext::default(), "scale.mid").unwrap();
//! let seg = g_pelt(&piece, 0.6, 0.15, 0.7).unwrap();
//! assert_eq!(seg.boundaries.last().unwrap().note_index, 40);
//! ```

pub mod changepoint;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod norm_method;
pub mod note_model;
pub mod pipeline;
pub mod sweep;

pub use changepoint::{pelt, window_detect, Changepoints, KernelCost, PeltParams, SelectionRule};
pub use error::{Error, Result};
pub use evaluation::{evaluate_corpus, match_boundaries, Annotation, EvalReport, Level, ToleranceKind};
pub use graph::{adjacency, build_graph, novelty, AdjacencyMatrix, NoteGraph, NoveltySignal};
pub use norm_method::{run_norm, NormParams};
pub use note_model::{parse_midi, parse_note_csv, Note, Piece, TimeSignature, TimingContext};
pub use pipeline::{g_pelt, g_window, run_method, Boundary, Method, MethodParams, Segmentation};
