// SPDX-License-Identifier: MIT OR Apache-2.0

//! Note graphs, their adjacency matrices and row-difference novelty curves.
//!
//! Three undirected relations connect notes `a` and `b` (never a note with
//! itself):
//!
//! * **onset**: both notes start on the same tick;
//! * **consecutive**: one note ends on the tick the other starts;
//! * **overlap**: one note starts while the other, which started earlier, is
//!   still sounding.
//!
//! Each satisfied relation contributes its own edge kind. Tick equality is
//! exact unless a consecutive tolerance is configured, in which case a pair
//! may carry both a consecutive and an overlap edge.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::note_model::{Note, Piece};

pub const DEFAULT_MAX_NOTES: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeKind {
    Onset,
    Consecutive,
    Overlap,
}

/// Undirected edge stored once with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphOptions {
    /// Maximum `|off(a) - on(b)|` in ticks still counted as consecutive. `0`
    /// means exact equality.
    pub consecutive_tolerance_ticks: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoteGraph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl NoteGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges sorted by `(i, j, kind)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize, kind: EdgeKind) -> bool {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&Edge { i, j, kind }).is_ok()
    }
}

/// Relation kinds from `a` to `b`, evaluated as an ordered pair.
fn directed_kinds(a: &Note, b: &Note, tolerance: u64) -> [bool; 3] {
    [
        a.onset_ticks == b.onset_ticks,
        a.offset_ticks.abs_diff(b.onset_ticks) <= tolerance,
        a.offset_ticks > b.onset_ticks && a.onset_ticks < b.onset_ticks,
    ]
}

pub fn build_graph(piece: &Piece) -> NoteGraph {
    build_graph_with(piece, &GraphOptions::default())
}

pub fn build_graph_with(piece: &Piece, options: &GraphOptions) -> NoteGraph {
    const KINDS: [EdgeKind; 3] = [EdgeKind::Onset, EdgeKind::Consecutive, EdgeKind::Overlap];
    let notes = piece.notes();
    let tol = options.consecutive_tolerance_ticks;

    // Notes are onset-sorted, so every partner `j > i` of note `i` lies in the
    // contiguous run with on(j) <= off(i) + tol.
    let per_note: Vec<Vec<Edge>> = (0..notes.len())
        .into_par_iter()
        .map(|i| {
            let a = &notes[i];
            let horizon = a.offset_ticks.saturating_add(tol);
            let mut out = Vec::new();
            for (j, b) in notes.iter().enumerate().skip(i + 1) {
                if b.onset_ticks > horizon {
                    break;
                }
                let fwd = directed_kinds(a, b, tol);
                let back = directed_kinds(b, a, tol);
                for (k, kind) in KINDS.iter().enumerate() {
                    if fwd[k] || back[k] {
                        out.push(Edge { i, j, kind: *kind });
                    }
                }
            }
            out
        })
        .collect();

    NoteGraph {
        node_count: notes.len(),
        edges: per_note.into_iter().flatten().collect(),
    }
}

/// Per-kind weights for the weighted adjacency variant; the summed weight of a
/// pair is clipped at `cap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KindWeights {
    pub onset: f32,
    pub consecutive: f32,
    pub overlap: f32,
    pub cap: f32,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            onset: 1.0,
            consecutive: 1.0,
            overlap: 1.0,
            cap: 1.0,
        }
    }
}

impl KindWeights {
    fn weight(&self, kind: EdgeKind) -> f32 {
        match kind {
            EdgeKind::Onset => self.onset,
            EdgeKind::Consecutive => self.consecutive,
            EdgeKind::Overlap => self.overlap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjacencyOptions {
    pub max_notes: usize,
    /// `None` gives the binary matrix.
    pub weights: Option<KindWeights>,
}

impl Default for AdjacencyOptions {
    fn default() -> Self {
        AdjacencyOptions {
            max_notes: DEFAULT_MAX_NOTES,
            weights: None,
        }
    }
}

/// Dense symmetric matrix with zero diagonal, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    data: Vec<f32>,
}

impl AdjacencyMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn adjacency(graph: &NoteGraph) -> Result<AdjacencyMatrix> {
    adjacency_with(graph, &AdjacencyOptions::default())
}

pub fn adjacency_with(graph: &NoteGraph, options: &AdjacencyOptions) -> Result<AdjacencyMatrix> {
    let n = graph.node_count;
    if n > options.max_notes {
        return Err(Error::CapacityExceeded {
            notes: n,
            limit: options.max_notes,
        });
    }
    let mut data = vec![0f32; n * n];
    match options.weights {
        None => {
            for e in &graph.edges {
                data[e.i * n + e.j] = 1.0;
                data[e.j * n + e.i] = 1.0;
            }
        }
        Some(w) => {
            for e in &graph.edges {
                data[e.i * n + e.j] += w.weight(e.kind);
            }
            for i in 0..n {
                for j in i + 1..n {
                    let v = data[i * n + j].min(w.cap);
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                }
            }
        }
    }
    Ok(AdjacencyMatrix { n, data })
}

/// Any square matrix a novelty curve can be read from.
pub trait SquareMatrix {
    fn dim(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;
}

impl SquareMatrix for AdjacencyMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        f64::from(self.get(i, j))
    }
}

/// Plain row-major `f64` square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParams("matrix rows must form a square".into()));
        }
        Ok(DenseMatrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

impl SquareMatrix for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NoveltySource {
    AdjacencyMatrix,
    Ssm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoveltySignal {
    pub values: Vec<f64>,
    pub source: NoveltySource,
}

/// Euclidean distance between consecutive rows: `c[i] = ||row(i+1) - row(i)||`.
pub fn novelty<M: SquareMatrix + Sync>(matrix: &M, source: NoveltySource) -> Result<NoveltySignal> {
    let n = matrix.dim();
    if n < 2 {
        return Err(Error::MatrixTooSmall(n));
    }
    let values = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = matrix.entry(i + 1, j) - matrix.entry(i, j);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(NoveltySignal { values, source })
}
