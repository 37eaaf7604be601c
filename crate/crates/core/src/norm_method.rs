// SPDX-License-Identifier: MIT OR Apache-2.0

//! The Norm method: inter-onset intervals plus pitch contour, z-scored and
//! peak-picked into boundary candidates, then refined by peak-picking the
//! novelty of a self-similarity matrix built over the candidate segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{novelty, DenseMatrix, NoveltySource};
use crate::note_model::Piece;
use crate::pipeline::scaled_window;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    /// Scales the first peak-picking window with the note count.
    pub alpha1: f64,
    /// First threshold, in standard deviations above the mean.
    pub tau1: f64,
    /// Second peak-picking window, in candidate segments.
    pub w2: usize,
    pub tau2: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        NormParams {
            alpha1: 0.6,
            tau1: 1.0,
            w2: 2,
            tau2: 0.5,
        }
    }
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1.is_finite() && self.alpha1 > 0.0) {
            return Err(Error::InvalidParams(format!("alpha1 must be positive, got {}", self.alpha1)));
        }
        if !self.tau1.is_finite() || !self.tau2.is_finite() {
            return Err(Error::InvalidParams("thresholds must be finite".into()));
        }
        if self.w2 == 0 {
            return Err(Error::InvalidParams("w2 must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a candidate segment is turned into a feature vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanFeature {
    /// `ioi[k] + direction[k]`, the same combination used for candidates.
    #[default]
    ElementwiseSum,
    /// `ioi` followed by `direction`.
    Concatenate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    /// Inter-onset intervals in beats.
    pub ioi: Vec<f64>,
    /// Sign of each consecutive pitch step.
    pub direction: Vec<i8>,
    pub combined: Vec<f64>,
    pub normalized: Vec<f64>,
}

pub fn ioi(piece: &Piece) -> Result<Vec<f64>> {
    piece.require_notes(2)?;
    Ok(ioi_range(piece, 0, piece.len()))
}

fn ioi_range(piece: &Piece, start: usize, end: usize) -> Vec<f64> {
    let timing = piece.timing();
    piece.notes()[start..end]
        .windows(2)
        .map(|w| timing.beats(w[1].onset_ticks - w[0].onset_ticks))
        .collect()
}

pub fn local_direction(piece: &Piece) -> Result<Vec<i8>> {
    piece.require_notes(2)?;
    Ok(direction_range(piece, 0, piece.len()))
}

fn direction_range(piece: &Piece, start: usize, end: usize) -> Vec<i8> {
    piece.notes()[start..end]
        .windows(2)
        .map(|w| match w[1].pitch.cmp(&w[0].pitch) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-score with the population standard deviation; all zeros when it is 0.
pub fn zscore(v: &[f64]) -> Vec<f64> {
    let (mean, std) = mean_std(v);
    if std == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / std).collect()
}

/// Indices that are the maximum of `[i - window, i + window]` (clipped),
/// exceed `mean + threshold * std` of the whole signal, and have no equal
/// value earlier in their window.
pub fn peak_pick(signal: &[f64], window: usize, threshold: f64) -> Vec<usize> {
    let (mean, std) = mean_std(signal);
    let floor = mean + threshold * std;
    (0..signal.len())
        .filter(|&i| {
            let v = signal[i];
            let hi = (i + window + 1).min(signal.len());
            v > floor
                && signal[i.saturating_sub(window)..i].iter().all(|&u| v > u)
                && signal[i + 1..hi].iter().all(|&u| v >= u)
        })
        .collect()
}

/// First peak-picking window: `max(1, round(alpha * n_notes / 15))`.
pub fn candidate_window(alpha: f64, n_notes: usize) -> usize {
    scaled_window(alpha, n_notes)
}

pub fn features(piece: &Piece) -> Result<FeatureVector> {
    let ioi = ioi(piece)?;
    let direction = local_direction(piece)?;
    let combined: Vec<f64> = ioi
        .iter()
        .zip(&direction)
        .map(|(x, &l)| x + f64::from(l))
        .collect();
    let normalized = zscore(&combined);
    Ok(FeatureVector {
        ioi,
        direction,
        combined,
        normalized,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSsm {
    pub matrix: DenseMatrix,
    /// Zero-padded per-segment feature vectors, all of equal length.
    pub segment_vectors: Vec<Vec<f64>>,
}

pub fn segment_ssm(piece: &Piece, candidates: &[usize]) -> Result<SegmentSsm> {
    segment_ssm_with(piece, candidates, SpanFeature::default())
}

/// Splits the notes at each candidate index into `C + 1` spans and compares
/// span feature vectors by Euclidean distance.
pub fn segment_ssm_with(piece: &Piece, candidates: &[usize], feature: SpanFeature) -> Result<SegmentSsm> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    let n = piece.len();
    if candidates.windows(2).any(|w| w[0] >= w[1]) || candidates[0] < 1 || candidates[candidates.len() - 1] >= n {
        return Err(Error::InvalidParams(format!(
            "candidates must be strictly increasing within [1, {}]",
            n.saturating_sub(1)
        )));
    }

    let mut bounds = Vec::with_capacity(candidates.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(candidates);
    bounds.push(n);

    let mut vectors: Vec<Vec<f64>> = bounds
        .windows(2)
        .map(|w| {
            let ioi = ioi_range(piece, w[0], w[1]);
            let dir = direction_range(piece, w[0], w[1]);
            match feature {
                SpanFeature::ElementwiseSum => ioi.iter().zip(&dir).map(|(x, &l)| x + f64::from(l)).collect(),
                SpanFeature::Concatenate => ioi.into_iter().chain(dir.into_iter().map(f64::from)).collect(),
            }
        })
        .collect();
    let width = vectors.iter().map(Vec::len).max().unwrap_or(0);
    for v in &mut vectors {
        v.resize(width, 0.0);
    }
    Ok(SegmentSsm {
        matrix: pairwise_distances(&vectors),
        segment_vectors: vectors,
    })
}

pub(crate) fn pairwise_distances(vectors: &[Vec<f64>]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(vectors.len());
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let d = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    m
}

/// Intermediate and final output of the Norm method, in note indices.
#[derive(Clone, Debug, PartialEq)]
pub struct NormOutcome {
    pub features: FeatureVector,
    pub first_window: usize,
    /// Candidate boundaries `b`.
    pub candidates: Vec<usize>,
    pub ssm: Option<SegmentSsm>,
    pub ssm_novelty: Option<Vec<f64>>,
    /// Refined boundaries `b'`, always a subset of `candidates`.
    pub boundaries: Vec<usize>,
}

pub fn run_norm(piece: &Piece, params: &NormParams) -> Result<NormOutcome> {
    run_norm_with(piece, params, SpanFeature::default())
}

pub fn run_norm_with(piece: &Piece, params: &NormParams, feature: SpanFeature) -> Result<NormOutcome> {
    params.validate()?;
    piece.require_notes(4)?;
    let features = features(piece)?;
    let first_window = candidate_window(params.alpha1, piece.len());
    // A peak at IOI position i marks the gap before note i + 1.
    let candidates: Vec<usize> = peak_pick(&features.normalized, first_window, params.tau1)
        .into_iter()
        .map(|i| i + 1)
        .collect();

    if candidates.len() < 2 {
        return Ok(NormOutcome {
            features,
            first_window,
            boundaries: candidates.clone(),
            candidates,
            ssm: None,
            ssm_novelty: None,
        });
    }

    let ssm = segment_ssm_with(piece, &candidates, feature)?;
    let curve = novelty(&ssm.matrix, NoveltySource::Ssm)?.values;
    // curve[k] compares spans k and k + 1, which meet at candidates[k].
    let boundaries = peak_pick(&curve, params.w2, params.tau2)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    Ok(NormOutcome {
        features,
        first_window,
        candidates,
        ssm: Some(ssm),
        ssm_novelty: Some(curve),
        boundaries,
    })
}

/// Runs the Norm method and packages it as a [`crate::pipeline::Segmentation`].
pub fn norm_segment(piece: &Piece, params: &NormParams) -> Result<crate::pipeline::Segmentation> {
    crate::pipeline::run_method(piece, &crate::pipeline::MethodParams::norm(*params))
}
