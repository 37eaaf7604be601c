// SPDX-License-Identifier: MIT OR Apache-2.0

//! The three segmentation methods behind one parameterized entry point.
//!
//! G-PELT and G-Window share the same front end: note graph, adjacency matrix,
//! novelty curve of length `N - 1`. A changepoint at curve position `i` marks
//! the onset of note `i + 1`. Every segmentation ends with a boundary at the
//! end of the piece.

use serde::{Deserialize, Serialize};

use crate::changepoint::{median_heuristic_gamma, pelt, window_detect, KernelCost, PeltParams, SelectionRule};
use crate::error::{Error, Result};
use crate::graph::{adjacency_with, build_graph_with, novelty, AdjacencyOptions, GraphOptions, NoveltySignal, NoveltySource};
use crate::norm_method::{run_norm, NormParams};
use crate::note_model::{Piece, TimeSignature};

/// Reference note count that window sizes are expressed against.
pub const WINDOW_NOTE_SCALE: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Norm,
    GPelt,
    GWindow,
    /// Evenly spaced boundaries, independent of content.
    Equidistant,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Norm => "norm",
            Method::GPelt => "g-pelt",
            Method::GWindow => "g-window",
            Method::Equidistant => "equidistant",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "norm" => Ok(Method::Norm),
            "g-pelt" | "gpelt" => Ok(Method::GPelt),
            "g-window" | "gwindow" => Ok(Method::GWindow),
            "equidistant" | "baseline" => Ok(Method::Equidistant),
            other => Err(Error::InvalidParams(format!("unknown method `{other}`"))),
        }
    }
}

/// Method selector plus every parameter it may use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub method: Method,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl MethodParams {
    pub fn g_pelt(alpha: f64, beta: f64, penalty: f64) -> Self {
        MethodParams {
            method: Method::GPelt,
            alpha,
            beta: Some(beta),
            penalty,
            norm: None,
            k: None,
        }
    }

    pub fn g_window(alpha: f64, penalty: f64) -> Self {
        MethodParams {
            method: Method::GWindow,
            alpha,
            beta: None,
            penalty,
            norm: None,
            k: None,
        }
    }

    pub fn norm(params: NormParams) -> Self {
        MethodParams {
            method: Method::Norm,
            alpha: params.alpha1,
            beta: None,
            penalty: params.tau2,
            norm: Some(params),
            k: None,
        }
    }

    pub fn equidistant(k: usize) -> Self {
        MethodParams {
            method: Method::Equidistant,
            alpha: 0.0,
            beta: None,
            penalty: 0.0,
            norm: None,
            k: Some(k),
        }
    }

    /// Optimal settings found on the Winterreise corpus (mid level).
    pub fn swd(method: Method) -> Self {
        match method {
            Method::Norm => Self::norm(NormParams::default()),
            Method::GPelt => Self::g_pelt(0.6, 0.15, 0.7),
            Method::GWindow => Self::g_window(1.0, 0.5),
            Method::Equidistant => Self::equidistant(5),
        }
    }

    /// Optimal G-PELT settings on the Beethoven sonata corpus per level.
    pub fn bps_g_pelt(level: crate::evaluation::Level) -> Self {
        use crate::evaluation::Level;
        match level {
            Level::High => Self::g_pelt(2.3, 1.5, 4.0),
            Level::Mid => Self::g_pelt(1.0, 0.01, 0.5),
            Level::Low => Self::g_pelt(0.1, 0.15, 0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        match self.method {
            Method::Norm => self
                .norm
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("norm method requires norm parameters".into()))?
                .validate(),
            Method::Equidistant => match self.k {
                Some(k) if k >= 1 => Ok(()),
                _ => Err(Error::InvalidParams("equidistant requires k >= 1".into())),
            },
            Method::GPelt | Method::GWindow => {
                positive("alpha", self.alpha)?;
                if self.method == Method::GPelt {
                    let beta = self
                        .beta
                        .ok_or_else(|| Error::InvalidParams("g-pelt requires beta".into()))?;
                    positive("beta", beta)?;
                }
                if !(self.penalty.is_finite() && self.penalty >= 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "penalty must be non-negative, got {}",
                        self.penalty
                    )));
                }
                Ok(())
            }
        }
    }
}

/// `max(1, round(alpha * n / 15))`, shared by every method that sizes a
/// window from the note count.
pub fn scaled_window(alpha: f64, n_notes: usize) -> usize {
    let w = (alpha * n_notes as f64 / WINDOW_NOTE_SCALE).round();
    if w.is_finite() && w >= 1.0 {
        w as usize
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub note_index: usize,
    pub beat: f64,
    pub second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub source: String,
    pub method: Method,
    pub params: MethodParams,
    pub time_signature: TimeSignature,
    pub includes_final: bool,
    pub boundaries: Vec<Boundary>,
    /// Norm only: the first-stage candidates `b`, with the final boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Boundary>>,
}

impl Segmentation {
    pub fn boundary_beats(&self) -> Vec<f64> {
        self.boundaries.iter().map(|b| b.beat).collect()
    }

    /// Norm segmentations scored on their candidates rather than refined boundaries.
    pub fn candidate_view(&self) -> Option<Segmentation> {
        self.candidates.as_ref().map(|c| Segmentation {
            boundaries: c.clone(),
            candidates: None,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineOptions {
    pub graph: GraphOptions,
    pub adjacency: AdjacencyOptions,
}

/// Graph, adjacency matrix and its novelty curve.
pub fn graph_novelty(piece: &Piece, options: &PipelineOptions) -> Result<NoveltySignal> {
    piece.require_notes(2)?;
    let graph = build_graph_with(piece, &options.graph);
    let matrix = adjacency_with(&graph, &options.adjacency)?;
    novelty(&matrix, NoveltySource::AdjacencyMatrix)
}

fn boundaries_from_notes(piece: &Piece, note_indices: impl IntoIterator<Item = usize>) -> Vec<Boundary> {
    let timing = piece.timing();
    let mut out: Vec<Boundary> = note_indices
        .into_iter()
        .map(|i| {
            let ticks = piece.notes()[i].onset_ticks;
            Boundary {
                note_index: i,
                beat: timing.beats(ticks),
                second: timing.seconds(ticks),
            }
        })
        .collect();
    let end = piece.end_ticks();
    out.push(Boundary {
        note_index: piece.len(),
        beat: timing.beats(end),
        second: timing.seconds(end),
    });
    out
}

fn segmentation(piece: &Piece, params: MethodParams, notes: Vec<usize>) -> Segmentation {
    Segmentation {
        source: piece.source_path().to_string(),
        method: params.method,
        params,
        time_signature: piece.timing().time_signature,
        includes_final: true,
        boundaries: boundaries_from_notes(piece, notes),
        candidates: None,
    }
}

fn equidistant_segmentation(piece: &Piece, params: &MethodParams) -> Result<Segmentation> {
    piece.require_notes(1)?;
    let timing = piece.timing();
    let beats = crate::evaluation::equidistant_baseline(piece.duration_beats(), params.k.expect("validated"))?;
    let tpq = f64::from(timing.ticks_per_quarter);
    let boundaries = beats
        .iter()
        .map(|&beat| {
            let ticks = beat * tpq;
            Boundary {
                note_index: piece.notes().partition_point(|n| (n.onset_ticks as f64) < ticks),
                beat,
                second: ticks * f64::from(timing.tempo_us_per_quarter) / (tpq * 1e6),
            }
        })
        .collect();
    Ok(Segmentation {
        source: piece.source_path().to_string(),
        method: Method::Equidistant,
        params: *params,
        time_signature: timing.time_signature,
        includes_final: true,
        boundaries,
        candidates: None,
    })
}

/// Changepoint positions on the novelty curve to note indices.
fn curve_to_notes(interior: &[usize]) -> Vec<usize> {
    interior.iter().map(|&i| i + 1).collect()
}

pub fn g_pelt(piece: &Piece, alpha: f64, beta: f64, penalty: f64) -> Result<Segmentation> {
    run_method(piece, &MethodParams::g_pelt(alpha, beta, penalty))
}

pub fn g_window(piece: &Piece, alpha: f64, penalty: f64) -> Result<Segmentation> {
    run_method(piece, &MethodParams::g_window(alpha, penalty))
}

pub fn run_method(piece: &Piece, params: &MethodParams) -> Result<Segmentation> {
    run_method_with(piece, params, &PipelineOptions::default())
}

pub fn run_method_with(piece: &Piece, params: &MethodParams, options: &PipelineOptions) -> Result<Segmentation> {
    params.validate()?;
    if params.method == Method::Equidistant {
        return equidistant_segmentation(piece, params);
    }
    piece.require_notes(4)?;
    match params.method {
        Method::Equidistant => unreachable!(),
        Method::Norm => {
            let norm = params.norm.expect("validated");
            let outcome = run_norm(piece, &norm)?;
            let mut seg = segmentation(piece, *params, outcome.boundaries);
            seg.candidates = Some(boundaries_from_notes(piece, outcome.candidates));
            Ok(seg)
        }
        Method::GPelt => {
            let curve = graph_novelty(piece, options)?;
            let min_size = scaled_window(params.alpha, piece.len());
            let beta = params.beta.expect("validated");
            let jump = ((beta * min_size as f64).round() as usize).max(1);
            let gamma = median_heuristic_gamma(&curve.values);
            let cost = KernelCost::new(curve.values, gamma)?;
            let cps = pelt(&cost, &PeltParams::new(min_size, jump, params.penalty)?)?;
            Ok(segmentation(piece, *params, curve_to_notes(cps.interior())))
        }
        Method::GWindow => {
            let curve = graph_novelty(piece, options)?;
            let mut window = scaled_window(params.alpha, piece.len()).max(2);
            window += window % 2;
            let gamma = median_heuristic_gamma(&curve.values);
            let cost = KernelCost::new(curve.values, gamma)?;
            let cps = window_detect(&cost, window, SelectionRule::PenaltyRatio(params.penalty))?;
            Ok(segmentation(piece, *params, curve_to_notes(cps.interior())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note_model::{Note, TimingContext};

    fn chords_then_melody(chords: usize, melody: usize) -> Piece {
        let mut notes = Vec::new();
        for c in 0..chords as u64 {
            for (k, p) in [48u8, 55, 64].iter().enumerate() {
                notes.push(Note::new(p + (c % 3) as u8 + k as u8, c * 480, c * 480 + 480));
            }
        }
        let start = chords as u64 * 480;
        for m in 0..melody as u64 {
            notes.push(Note::new(60 + (m % 7) as u8, start + m * 480, start + m * 480 + 480));
        }
        Piece::new(notes, TimingContext::default(), "fixture.mid").unwrap()
    }

    #[test]
    fn scaled_window_examples() {
        assert_eq!(scaled_window(0.6, 120), 5);
        assert_eq!(scaled_window(0.1, 10), 1);
        assert_eq!(scaled_window(2.3, 1500), 230);
    }

    #[test]
    fn every_method_appends_the_final_boundary() {
        let p = chords_then_melody(20, 60);
        for method in [Method::Norm, Method::GPelt, Method::GWindow] {
            let seg = run_method(&p, &MethodParams::swd(method)).unwrap();
            let last = seg.boundaries.last().unwrap();
            assert_eq!(last.note_index, p.len());
            assert_eq!(last.beat, p.duration_beats());
            assert!(seg.boundaries.windows(2).all(|w| w[0].note_index < w[1].note_index));
            assert!(seg.boundaries.windows(2).all(|w| w[0].beat <= w[1].beat));
        }
    }

    #[test]
    fn norm_without_norm_params_is_invalid() {
        let p = chords_then_melody(4, 8);
        let params = MethodParams {
            norm: None,
            ..MethodParams::swd(Method::Norm)
        };
        assert!(matches!(run_method(&p, &params), Err(Error::InvalidParams(_))));
        let params = MethodParams {
            beta: None,
            ..MethodParams::swd(Method::GPelt)
        };
        assert!(matches!(run_method(&p, &params), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn too_few_notes() {
        let p = chords_then_melody(1, 0);
        assert!(matches!(g_pelt(&p, 0.6, 0.15, 0.7), Err(Error::TooFewNotes { .. })));
    }

    #[test]
    fn constant_texture_gives_only_final_boundary() {
        let p = chords_then_melody(0, 80);
        let seg = g_pelt(&p, 0.6, 0.15, 0.7).unwrap();
        assert_eq!(seg.boundaries.len(), 1);
    }

    #[test]
    fn window_responds_only_to_the_curve_ends_on_a_melody() {
        // The first and last rows of a path graph have one neighbour fewer.
        let p = chords_then_melody(0, 80);
        let seg = g_window(&p, 1.0, 0.5).unwrap();
        let w = 6;
        for b in &seg.boundaries[..seg.boundaries.len() - 1] {
            assert!(b.note_index <= w + 1 || b.note_index >= p.len() - w - 1, "{b:?}");
        }
    }

    #[test]
    fn json_has_stable_key_order() {
        let p = chords_then_melody(4, 8);
        let seg = g_pelt(&p, 0.6, 0.15, 0.7).unwrap();
        let json = seg.to_json().unwrap();
        let keys: Vec<usize> = ["\"source\"", "\"method\"", "\"params\"", "\"boundaries\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Segmentation::from_json(&json).unwrap(), seg);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Norm, Method::GPelt, Method::GWindow] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }
}
