// SPDX-License-Identifier: MIT OR Apache-2.0

//! Boundary scoring with a beat tolerance.
//!
//! Beat 0 is never scored. The end of the piece is scored on both sides:
//! segmentations always carry it and annotations are expected to list it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::note_model::{TimeSignature, TimingContext};
use crate::pipeline::Segmentation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Mid => "mid",
            Level::High => "high",
        }
    }

    /// Boundary count per file used for the equidistant baseline on piano sonatas.
    pub fn baseline_k(&self) -> usize {
        match self {
            Level::High => 4,
            Level::Mid => 14,
            Level::Low => 46,
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Level::Low),
            "mid" => Ok(Level::Mid),
            "high" => Ok(Level::High),
            other => Err(Error::InvalidAnnotation(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub source: String,
    pub level: Level,
    pub boundaries_beats: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_signature: Option<TimeSignature>,
}

impl Annotation {
    pub fn new(source: impl Into<String>, level: Level, boundaries_beats: Vec<f64>) -> Result<Self> {
        let annotation = Annotation {
            source: source.into(),
            level,
            boundaries_beats,
            time_signature: None,
        };
        annotation.validate()?;
        Ok(annotation)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.boundaries_beats;
        if let Some(bad) = b.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidAnnotation(format!("{}: boundary {bad} is not a non-negative beat", self.source)));
        }
        if b.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidAnnotation(format!("{}: boundaries are not sorted", self.source)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    pub matched: usize,
    pub n_ref: usize,
    pub n_est: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// The estimate was empty; precision is reported as 0.
    pub precision_undefined: bool,
    /// The reference was empty; recall is reported as 0.
    pub recall_undefined: bool,
    /// Matched (reference index, estimate index) pairs in ascending order.
    pub pairs: Vec<(usize, usize)>,
}

fn sorted(v: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = v.iter().copied().zip(0..).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Maximum one-to-one matching with `|r - e| <= tolerance`.
///
/// For points on a line with a uniform tolerance the greedy sweep that pairs
/// the leftmost compatible points is maximum.
pub fn match_boundaries(reference: &[f64], estimate: &[f64], tolerance: f64) -> Result<MatchResult> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tolerance}")));
    }
    let r = sorted(reference);
    let e = sorted(estimate);
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < r.len() && j < e.len() {
        if e[j].0 < r[i].0 - tolerance {
            j += 1;
        } else if e[j].0 > r[i].0 + tolerance {
            i += 1;
        } else {
            pairs.push((r[i].1, e[j].1));
            i += 1;
            j += 1;
        }
    }
    pairs.sort_unstable();
    Ok(scores(pairs, r.len(), e.len()))
}

fn scores(pairs: Vec<(usize, usize)>, n_ref: usize, n_est: usize) -> MatchResult {
    let matched = pairs.len();
    let ratio = |n: usize| if n == 0 { 0.0 } else { matched as f64 / n as f64 };
    let precision = ratio(n_est);
    let recall = ratio(n_ref);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchResult {
        matched,
        n_ref,
        n_est,
        precision,
        recall,
        f1,
        precision_undefined: n_est == 0,
        recall_undefined: n_ref == 0,
        pairs,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceKind {
    #[default]
    OneBeat,
    OneBar,
}

impl ToleranceKind {
    pub const ALL: [ToleranceKind; 2] = [ToleranceKind::OneBeat, ToleranceKind::OneBar];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToleranceKind::OneBeat => "one-beat",
            ToleranceKind::OneBar => "one-bar",
        }
    }
}

impl std::fmt::Display for ToleranceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ToleranceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "one-beat" | "beat" => Ok(ToleranceKind::OneBeat),
            "one-bar" | "bar" => Ok(ToleranceKind::OneBar),
            other => Err(Error::InvalidParams(format!("unknown tolerance `{other}`"))),
        }
    }
}

/// Tolerance in quarter-note beats.
pub fn tolerance_in_beats(kind: ToleranceKind, timing: &TimingContext) -> f64 {
    tolerance_for_signature(kind, timing.time_signature)
}

pub fn tolerance_for_signature(kind: ToleranceKind, signature: TimeSignature) -> f64 {
    match kind {
        ToleranceKind::OneBeat => 1.0,
        ToleranceKind::OneBar => signature.bar_length_beats(),
    }
}

/// `k` evenly spaced boundaries; the last one is the end of the piece.
pub fn equidistant_baseline(duration_beats: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParams("baseline needs at least one boundary".into()));
    }
    if !(duration_beats.is_finite() && duration_beats > 0.0) {
        return Err(Error::InvalidParams(format!("duration must be positive, got {duration_beats}")));
    }
    Ok((1..=k)
        .map(|i| if i == k { duration_beats } else { i as f64 * duration_beats / k as f64 })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[i]` holds distances in `[i * bin_width, (i + 1) * bin_width)`.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub const DEFAULT_HISTOGRAM_BIN_BEATS: f64 = 10.0;

/// Distance from each estimate to its nearest reference, binned.
/// With an empty reference the histogram is empty.
pub fn beat_error_histogram(reference: &[f64], estimate: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidParams(format!("bin width must be positive, got {bin_width}")));
    }
    let mut counts = Vec::new();
    if reference.is_empty() {
        return Ok(Histogram { bin_width, counts });
    }
    let refs: Vec<f64> = sorted(reference).into_iter().map(|(x, _)| x).collect();
    for &e in estimate {
        let k = refs.partition_point(|&r| r < e);
        let mut d = f64::INFINITY;
        if k < refs.len() {
            d = d.min(refs[k] - e);
        }
        if k > 0 {
            d = d.min(e - refs[k - 1]);
        }
        let bin = (d / bin_width).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    Ok(Histogram { bin_width, counts })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileScore {
    pub file: String,
    pub tolerance_beats: f64,
    pub n_ref: usize,
    pub n_est: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub files: usize,
    pub p_mean: f64,
    pub p_std: f64,
    pub r_mean: f64,
    pub r_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_scores(scores: &[FileScore]) -> Self {
        let (p_mean, p_std) = mean_std(scores.iter().map(|s| s.precision));
        let (r_mean, r_std) = mean_std(scores.iter().map(|s| s.recall));
        let (f1_mean, f1_std) = mean_std(scores.iter().map(|s| s.f1));
        Aggregate {
            files: scores.len(),
            p_mean,
            p_std,
            r_mean,
            r_std,
            f1_mean,
            f1_std,
        }
    }

    pub fn summary_line(&self) -> String {
        format!("P={:.4} R={:.4} F1={:.4}", self.p_mean, self.r_mean, self.f1_mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub tolerance: ToleranceKind,
    pub per_file: Vec<FileScore>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per file: `file,P,R,F1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = ::csv::Writer::from_writer(Vec::new());
        w.write_record(["file", "P", "R", "F1"])?;
        for s in &self.per_file {
            w.write_record([s.file.clone(), s.precision.to_string(), s.recall.to_string(), s.f1.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Key used to pair files across directories: the file stem, or the parent
/// directory name when the stem is a generic per-piece name.
pub fn pairing_key(path: &str) -> String {
    let p = Path::new(path);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or(path);
    const GENERIC: [&str; 4] = ["notes", "phrases", "annotations", "segmentation"];
    if GENERIC.contains(&stem) {
        if let Some(parent) = p.parent().and_then(|d| d.file_name()).and_then(|s| s.to_str()) {
            return parent.to_string();
        }
    }
    stem.to_string()
}

/// Beats after zero, with repeats collapsed.
fn scored_beats(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().copied().filter(|&b| b > 0.0).collect();
    out.dedup();
    out
}

pub fn score_file(annotation: &Annotation, segmentation: &Segmentation, tolerance: ToleranceKind) -> Result<FileScore> {
    let signature = annotation.time_signature.unwrap_or(segmentation.time_signature);
    let tol = tolerance_for_signature(tolerance, signature);
    let m = match_boundaries(
        &scored_beats(&annotation.boundaries_beats),
        &scored_beats(&segmentation.boundary_beats()),
        tol,
    )?;
    Ok(FileScore {
        file: pairing_key(&segmentation.source),
        tolerance_beats: tol,
        n_ref: m.n_ref,
        n_est: m.n_est,
        matched: m.matched,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        precision_undefined: m.precision_undefined,
        recall_undefined: m.recall_undefined,
    })
}

/// Annotation/segmentation pairs sorted by key, plus keys found on one side only.
pub struct Pairing<'a> {
    pub pairs: Vec<(&'a Annotation, &'a Segmentation)>,
    pub unpaired: Vec<String>,
}

pub fn pair_by_source<'a>(annotations: &'a [Annotation], segmentations: &'a [Segmentation]) -> Result<Pairing<'a>> {
    let mut refs = BTreeMap::new();
    for a in annotations {
        if refs.insert(pairing_key(&a.source), a).is_some() {
            return Err(Error::InvalidAnnotation(format!("duplicate annotation for `{}`", a.source)));
        }
    }
    let mut ests = BTreeMap::new();
    for s in segmentations {
        if ests.insert(pairing_key(&s.source), s).is_some() {
            return Err(Error::InvalidParams(format!("duplicate segmentation for `{}`", s.source)));
        }
    }
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (key, a) in &refs {
        match ests.get(key) {
            Some(s) => pairs.push((*a, *s)),
            None => unpaired.push(key.clone()),
        }
    }
    unpaired.extend(ests.keys().filter(|k| !refs.contains_key(*k)).cloned());
    unpaired.sort();
    Ok(Pairing { pairs, unpaired })
}

pub fn evaluate_pairs(pairs: &[(&Annotation, &Segmentation)], tolerance: ToleranceKind) -> Result<EvalReport> {
    let per_file = pairs
        .par_iter()
        .map(|(a, s)| score_file(a, s, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        tolerance,
        aggregate: Aggregate::from_scores(&per_file),
        per_file,
    })
}

/// Scores every file; each annotation must pair with exactly one segmentation.
pub fn evaluate_corpus(
    annotations: &[Annotation],
    segmentations: &[Segmentation],
    tolerance: ToleranceKind,
) -> Result<EvalReport> {
    let pairing = pair_by_source(annotations, segmentations)?;
    if let Some(first) = pairing.unpaired.first() {
        return Err(Error::UnpairedFile(first.clone()));
    }
    evaluate_pairs(&pairing.pairs, tolerance)
}

fn find_column(headers: &::csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn parse_beat(text: &str, row: usize) -> Result<f64> {
    let bad = || Error::MalformedRow {
        row,
        message: format!("`{text}` is not a beat value"),
    };
    let v: f64 = text.trim().parse().map_err(|_| bad())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn csv_reader(text: &str) -> ::csv::Reader<&[u8]> {
    ::csv::ReaderBuilder::new()
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn group_levels(source: &str, by_level: BTreeMap<Level, Vec<f64>>) -> Result<Vec<Annotation>> {
    by_level
        .into_iter()
        .map(|(level, mut beats)| {
            beats.sort_by(f64::total_cmp);
            beats.dedup();
            Annotation::new(source, level, beats)
        })
        .collect()
}

/// Boundary CSV with columns `boundary_beat` and, optionally, `level`
/// (rows without a level use `default_level`). One annotation per level.
pub fn parse_annotation_csv(text: &str, source: &str, default_level: Level) -> Result<Vec<Annotation>> {
    let mut reader = csv_reader(text);
    let headers = reader.headers()?.clone();
    let beat_col =
        find_column(&headers, &["boundary_beat", "beat"]).ok_or_else(|| Error::MissingColumn("boundary_beat".into()))?;
    let level_col = find_column(&headers, &["level"]);
    let mut by_level: BTreeMap<Level, Vec<f64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let Some(beat) = record.get(beat_col).filter(|s| !s.is_empty()) else {
            continue;
        };
        let level = match level_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(l) => l.parse()?,
            None => default_level,
        };
        by_level.entry(level).or_default().push(parse_beat(beat, row)?);
    }
    group_levels(source, by_level)
}

/// JSON: a single annotation object or an array of them.
pub fn parse_annotation_json(text: &str) -> Result<Vec<Annotation>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Annotation),
        Many(Vec<Annotation>),
    }
    let list = match serde_json::from_str::<OneOrMany>(text)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(v) => v,
    };
    for a in &list {
        a.validate()?;
    }
    Ok(list)
}

/// One correction to a phrase table: replace `old` with `new` in `field`
/// (`start_beat` or `end_beat`) for rows of `source` at `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhrasePatch {
    pub source: String,
    pub level: Level,
    pub field: PhraseField,
    pub old: f64,
    pub new: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhraseField {
    Start,
    End,
}

/// Patch CSV with columns `source,level,field,old,new`.
pub fn parse_phrase_patches(text: &str) -> Result<Vec<PhrasePatch>> {
    let mut reader = csv_reader(text);
    let headers = reader.headers()?.clone();
    let col = |name: &str| find_column(&headers, &[name]).ok_or_else(|| Error::MissingColumn(name.into()));
    let (c_source, c_level, c_field, c_old, c_new) = (col("source")?, col("level")?, col("field")?, col("old")?, col("new")?);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let get = |c: usize| record.get(c).unwrap_or("");
        let field = match get(c_field).to_ascii_lowercase().as_str() {
            "start_beat" | "start" => PhraseField::Start,
            "end_beat" | "end" => PhraseField::End,
            other => {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("unknown field `{other}`"),
                })
            }
        };
        out.push(PhrasePatch {
            source: get(c_source).to_string(),
            level: get(c_level).parse()?,
            field,
            old: parse_beat(get(c_old), row)?,
            new: parse_beat(get(c_new), row)?,
        });
    }
    Ok(out)
}

/// Phrase table with columns `start_beat,end_beat[,level]`. Segment starts
/// and ends become boundaries. Patches addressed to this source are applied
/// first; a patch that matches no row is an error.
pub fn parse_phrases_csv(
    text: &str,
    source: &str,
    default_level: Level,
    patches: &[PhrasePatch],
) -> Result<Vec<Annotation>> {
    let mut reader = csv_reader(text);
    let headers = reader.headers()?.clone();
    let c_start =
        find_column(&headers, &["start_beat", "start"]).ok_or_else(|| Error::MissingColumn("start_beat".into()))?;
    let c_end = find_column(&headers, &["end_beat", "end"]).ok_or_else(|| Error::MissingColumn("end_beat".into()))?;
    let c_level = find_column(&headers, &["level"]);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let level = match c_level.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(l) => l.parse()?,
            None => default_level,
        };
        let start = parse_beat(record.get(c_start).unwrap_or(""), row)?;
        let end = parse_beat(record.get(c_end).unwrap_or(""), row)?;
        rows.push((row, level, start, end));
    }

    let key = pairing_key(source);
    for patch in patches.iter().filter(|p| pairing_key(&p.source) == key) {
        let mut hit = false;
        for (_, level, start, end) in rows.iter_mut() {
            let slot = match patch.field {
                PhraseField::Start => start,
                PhraseField::End => end,
            };
            if *level == patch.level && *slot == patch.old {
                *slot = patch.new;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::InvalidAnnotation(format!(
                "patch {} -> {} matches no {} phrase in `{source}`",
                patch.old, patch.new, patch.level
            )));
        }
    }

    let mut by_level: BTreeMap<Level, Vec<f64>> = BTreeMap::new();
    for (row, level, start, end) in rows {
        if start >= end {
            return Err(Error::MalformedRow {
                row,
                message: format!("phrase start {start} is not before end {end}"),
            });
        }
        let beats = by_level.entry(level).or_default();
        if start > 0.0 {
            beats.push(start);
        }
        beats.push(end);
    }
    group_levels(source, by_level)
}

/// Reads an annotation file by extension: `.json`, a phrase table (`.csv`
/// with start/end columns) or a boundary CSV.
pub fn load_annotations(path: &Path, default_level: Level, patches: &[PhrasePatch]) -> Result<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.to_string_lossy();
    let mut list = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => parse_annotation_json(&text)?,
        _ => {
            let first = text.lines().next().unwrap_or("").to_ascii_lowercase();
            if first.contains("start") && first.contains("end") {
                parse_phrases_csv(&text, &source, default_level, patches)?
            } else {
                parse_annotation_csv(&text, &source, default_level)?
            }
        }
    };
    for a in &mut list {
        if a.source.is_empty() {
            a.source = source.to_string();
        }
    }
    Ok(list)
}

/// Writes boundary CSV text for one annotation.
pub fn annotation_to_csv(annotation: &Annotation) -> String {
    let mut out = String::from("boundary_beat,level\n");
    for b in &annotation.boundaries_beats {
        let _ = writeln!(out, "{b},{}", annotation.level);
    }
    out
}
