// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid sweeps over method parameters.
//!
//! Each grid point segments every corpus file once and scores the result at
//! every requested tolerance. Segmentations can be cached on disk, keyed by
//! the file's content hash, the method and its parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{score_file, Aggregate, Annotation, FileScore, ToleranceKind};
use crate::note_model::{load_piece_bytes, LoadOptions};
use crate::pipeline::{run_method_with, Method, MethodParams, PipelineOptions, Segmentation};

/// Parameter names accepted in a grid.
pub const GRID_PARAMS: [&str; 8] = ["alpha", "beta", "penalty", "k", "alpha1", "tau1", "w2", "tau2"];

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub annotation: Annotation,
}

#[derive(Clone, Debug)]
pub struct SweepPlan {
    /// Values of every parameter not in the grid.
    pub base: MethodParams,
    pub grid: BTreeMap<String, Vec<f64>>,
    pub tolerances: Vec<ToleranceKind>,
    pub corpus: Vec<CorpusEntry>,
    pub load: LoadOptions,
    pub pipeline: PipelineOptions,
    pub cache_dir: Option<PathBuf>,
}

impl SweepPlan {
    pub fn new(base: MethodParams, corpus: Vec<CorpusEntry>) -> Self {
        SweepPlan {
            base,
            grid: BTreeMap::new(),
            tolerances: ToleranceKind::ALL.to_vec(),
            corpus,
            load: LoadOptions::default(),
            pipeline: PipelineOptions::default(),
            cache_dir: None,
        }
    }

    pub fn with_axis(mut self, name: &str, values: Vec<f64>) -> Self {
        self.grid.insert(name.to_string(), values);
        self
    }

    pub fn method(&self) -> Method {
        self.base.method
    }

    /// Every grid point in lexicographic order of its values, with the
    /// resulting parameters.
    pub fn grid_points(&self) -> Result<Vec<(BTreeMap<String, f64>, MethodParams)>> {
        for (name, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::InvalidParams(format!("grid axis `{name}` is empty")));
            }
        }
        let mut points = vec![BTreeMap::new()];
        for (name, values) in &self.grid {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            points = points
                .into_iter()
                .flat_map(|p| {
                    sorted.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v);
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|point| {
                let mut params = self.base;
                for (name, &value) in &point {
                    set_param(&mut params, name, value)?;
                }
                params.validate()?;
                Ok((point, params))
            })
            .collect()
    }
}

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value.fract() == 0.0 && value >= 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidParams(format!("`{name}` must be a whole number, got {value}")))
    }
}

/// Sets one named parameter.
pub fn set_param(params: &mut MethodParams, name: &str, value: f64) -> Result<()> {
    fn norm<'p>(p: &'p mut MethodParams, name: &str) -> Result<&'p mut crate::norm_method::NormParams> {
        p.norm
            .as_mut()
            .ok_or_else(|| Error::InvalidParams(format!("`{name}` applies to the norm method only")))
    }
    let name = match (params.method, name) {
        (Method::Norm, "alpha") => "alpha1",
        (Method::Norm, "penalty") => "tau2",
        _ => name,
    };
    match name {
        "alpha" => params.alpha = value,
        "beta" if params.method == Method::GPelt => params.beta = Some(value),
        "beta" => return Err(Error::InvalidParams("`beta` applies to g-pelt only".into())),
        "penalty" => params.penalty = value,
        "k" => params.k = Some(as_count(name, value)?),
        "alpha1" => {
            norm(params, name)?.alpha1 = value;
            params.alpha = value;
        }
        "tau1" => norm(params, name)?.tau1 = value,
        "w2" => norm(params, name)?.w2 = as_count(name, value)?,
        "tau2" => {
            norm(params, name)?.tau2 = value;
            params.penalty = value;
        }
        other => return Err(Error::InvalidParams(format!("unknown parameter `{other}`"))),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: BTreeMap<String, f64>,
    pub params: MethodParams,
    pub tolerance: ToleranceKind,
    pub aggregate: Aggregate,
    pub per_file: Vec<FileScore>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepFailure {
    pub file: String,
    pub point: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub method: Method,
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    #[serde(skip)]
    pub cache: CacheStats,
}

impl SweepTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per grid point and tolerance; failures follow as `#` lines.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = ::csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self.axes.clone();
        header.extend(
            ["tolerance", "files", "P_mean", "P_std", "R_mean", "R_std", "F1_mean", "F1_std"].map(String::from),
        );
        w.write_record(&header)?;
        for row in &self.rows {
            let a = &row.aggregate;
            let mut record: Vec<String> = self.axes.iter().map(|k| row.point[k].to_string()).collect();
            record.push(row.tolerance.to_string());
            record.push(a.files.to_string());
            record.extend([a.p_mean, a.p_std, a.r_mean, a.r_std, a.f1_mean, a.f1_std].map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        let mut out = String::from_utf8(bytes).expect("csv output is utf-8");
        for f in &self.failures {
            let _ = writeln!(out, "# failed {} [{}]: {}", f.file, f.point, f.message);
        }
        Ok(out)
    }
}

fn point_label(point: &BTreeMap<String, f64>) -> String {
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn cache_key(content_hash: &str, params: &MethodParams, pipeline: &PipelineOptions, load: &LoadOptions) -> Result<String> {
    let mut h = Sha256::new();
    h.update(content_hash.as_bytes());
    h.update(serde_json::to_vec(params)?);
    h.update(format!("{pipeline:?}|{load:?}").as_bytes());
    Ok(hex::encode(h.finalize()))
}

struct Source {
    bytes: Vec<u8>,
    hash: String,
}

struct Runner<'a> {
    plan: &'a SweepPlan,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Runner<'_> {
    fn segment(&self, entry: &CorpusEntry, source: &Source, params: &MethodParams) -> Result<Segmentation> {
        let path = entry.path.to_string_lossy();
        let cache_file = match &self.plan.cache_dir {
            Some(dir) => Some(dir.join(format!(
                "{}.json",
                cache_key(&source.hash, params, &self.plan.pipeline, &self.plan.load)?
            ))),
            None => None,
        };
        if let Some(file) = &cache_file {
            if let Ok(text) = std::fs::read_to_string(file) {
                if let Ok(mut seg) = Segmentation::from_json(&text) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    seg.source = path.to_string();
                    return Ok(seg);
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let piece = load_piece_bytes(&source.bytes, &path, &self.plan.load)?;
        let seg = run_method_with(&piece, params, &self.plan.pipeline)?;
        if let Some(file) = &cache_file {
            let tmp = file.with_extension(format!("tmp{}", std::process::id()));
            std::fs::write(&tmp, seg.to_json()?).map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, file).map_err(|e| Error::io(file, e))?;
        }
        Ok(seg)
    }
}

/// Runs the full grid. Per-file errors are recorded and never abort the sweep.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepTable> {
    if plan.corpus.is_empty() {
        return Err(Error::InvalidParams("sweep corpus is empty".into()));
    }
    if plan.tolerances.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one tolerance".into()));
    }
    if let Some(name) = plan.grid.keys().find(|k| !GRID_PARAMS.contains(&k.as_str())) {
        return Err(Error::InvalidParams(format!("unknown parameter `{name}`")));
    }
    let points = plan.grid_points()?;
    if let Some(dir) = &plan.cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let sources: Vec<std::result::Result<Source, String>> = plan
        .corpus
        .par_iter()
        .map(|entry| {
            std::fs::read(&entry.path)
                .map(|bytes| Source {
                    hash: hex::encode(Sha256::digest(&bytes)),
                    bytes,
                })
                .map_err(|e| Error::io(&entry.path, e).to_string())
        })
        .collect();

    let runner = Runner {
        plan,
        hits: AtomicUsize::new(0),
        misses: AtomicUsize::new(0),
    };
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..plan.corpus.len()).map(move |f| (p, f)))
        .collect();
    let outcomes: Vec<std::result::Result<Vec<FileScore>, String>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let entry = &plan.corpus[f];
            let source = sources[f].as_ref().map_err(Clone::clone)?;
            let seg = runner.segment(entry, source, &points[p].1).map_err(|e| e.to_string())?;
            plan.tolerances
                .iter()
                .map(|&t| score_file(&entry.annotation, &seg, t))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (p, (point, params)) in points.iter().enumerate() {
        let mut per_tol: Vec<Vec<FileScore>> = vec![Vec::new(); plan.tolerances.len()];
        for f in 0..plan.corpus.len() {
            match &outcomes[p * plan.corpus.len() + f] {
                Ok(scores) => {
                    for (t, s) in scores.iter().enumerate() {
                        per_tol[t].push(s.clone());
                    }
                }
                Err(message) => failures.push(SweepFailure {
                    file: plan.corpus[f].path.to_string_lossy().into_owned(),
                    point: point_label(point),
                    message: message.clone(),
                }),
            }
        }
        for (t, per_file) in per_tol.into_iter().enumerate() {
            rows.push(SweepRow {
                point: point.clone(),
                params: *params,
                tolerance: plan.tolerances[t],
                aggregate: Aggregate::from_scores(&per_file),
                per_file,
            });
        }
    }
    rows.sort_by(|a, b| {
        let va = a.point.values();
        let vb = b.point.values();
        va.zip(vb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.tolerance.cmp(&b.tolerance))
    });

    Ok(SweepTable {
        method: plan.method(),
        axes: plan.grid.keys().cloned().collect(),
        rows,
        failures,
        cache: CacheStats {
            hits: runner.hits.into_inner(),
            misses: runner.misses.into_inner(),
        },
    })
}

/// Row with the highest mean F1 at `tolerance`; ties go to smaller alpha,
/// then beta, then penalty.
pub fn best_params(table: &SweepTable, tolerance: ToleranceKind) -> Result<&SweepRow> {
    table
        .rows
        .iter()
        .filter(|r| r.tolerance == tolerance)
        .min_by(|a, b| {
            b.aggregate
                .f1_mean
                .total_cmp(&a.aggregate.f1_mean)
                .then(a.params.alpha.total_cmp(&b.params.alpha))
                .then(a.params.beta.unwrap_or(0.0).total_cmp(&b.params.beta.unwrap_or(0.0)))
                .then(a.params.penalty.total_cmp(&b.params.penalty))
        })
        .ok_or(Error::EmptyTable)
}

/// Grid values parsed from `a,b,c` or `start:stop:step` (inclusive).
pub fn parse_axis(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParams(format!("cannot read grid values `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let [start, stop, step]: [f64; 3] = [parts[0], parts[1], parts[2]]
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .try_into()
            .map_err(|_| bad())?;
        if !(step > 0.0 && start.is_finite() && stop.is_finite()) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

/// Default location for a sweep cache beside `base`.
pub fn default_cache_dir(base: &Path) -> PathBuf {
    base.join(".symseg-cache")
}
