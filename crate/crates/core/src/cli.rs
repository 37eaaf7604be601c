// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `symseg` command line.
//!
//! Exit codes: 0 when every input succeeds, 2 when some fail, 1 when none
//! succeed or the arguments are invalid.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{
    beat_error_histogram, evaluate_pairs, load_annotations, pair_by_source, pairing_key, parse_phrase_patches,
    Annotation, Level, PhrasePatch, ToleranceKind, DEFAULT_HISTOGRAM_BIN_BEATS,
};
use crate::graph::{adjacency_with, build_graph_with, SquareMatrix, DEFAULT_MAX_NOTES};
use crate::norm_method::run_norm;
use crate::note_model::{load_piece, LoadOptions, Piece, TempoPolicy, TimeSignature};
use crate::pipeline::{graph_novelty, run_method_with, Method, MethodParams, PipelineOptions, Segmentation};
use crate::sweep::{best_params, run_sweep, set_param, CorpusEntry, SweepPlan};

/// Environment variable holding the note capacity limit.
pub const MAX_NOTES_ENV: &str = "SYMSEG_MAX_NOTES";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "symseg", version, about = "Structure boundaries for MIDI and note-list files")]
pub struct Cli {
    /// Worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Segment files and write one segmentation JSON per input
    Segment(SegmentArgs),
    /// Score segmentation JSON files against annotations
    Evaluate(EvaluateArgs),
    /// Write equidistant baseline segmentations
    Baseline(BaselineArgs),
    /// Evaluate a parameter grid over an annotated corpus
    Sweep(SweepArgs),
    /// Export curves and matrices as CSV for plotting
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Norm,
    GPelt,
    GWindow,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Norm => Method::Norm,
            MethodArg::GPelt => Method::GPelt,
            MethodArg::GWindow => Method::GWindow,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    BpsHigh,
    BpsMid,
    BpsLow,
    SwdMid,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Preset as ValueEnum>::from_str(s, true).map_err(|_| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TempoArg {
    Reject,
    UseFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Low,
    Mid,
    High,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Low => Level::Low,
            LevelArg::Mid => Level::Mid,
            LevelArg::High => Level::High,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ToleranceArg {
    OneBeat,
    OneBar,
    Both,
}

impl ToleranceArg {
    fn kinds(self) -> Vec<ToleranceKind> {
        match self {
            ToleranceArg::OneBeat => vec![ToleranceKind::OneBeat],
            ToleranceArg::OneBar => vec![ToleranceKind::OneBar],
            ToleranceArg::Both => ToleranceKind::ALL.to_vec(),
        }
    }
}

/// Reading options shared by commands that parse music files.
#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// Flat key=value settings file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tick resolution for CSV input [default: 480]
    #[arg(long)]
    pub ticks_per_quarter: Option<u32>,
    /// Handling of MIDI files with more than one tempo [default: reject]
    #[arg(long, value_enum)]
    pub tempo_policy: Option<TempoArg>,
    /// Time signature override such as 3/4
    #[arg(long)]
    pub time_signature: Option<TimeSignature>,
    /// Largest note count accepted [default: 50000, or $SYMSEG_MAX_NOTES]
    #[arg(long)]
    pub max_notes: Option<usize>,
}

/// Method selection and parameters.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    /// Segmentation method [default: g-pelt]
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Parameter set tuned for a corpus and structure level
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Window scale [default: 0.6 for g-pelt, 1 for g-window]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Jump as a fraction of the minimum segment size, g-pelt only [default: 0.15]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Penalty [default: 0.7 for g-pelt, 0.5 for g-window]
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Norm first window scale [default: 0.6]
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Norm first threshold [default: 1]
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Norm second window in segments [default: 2]
    #[arg(long)]
    pub w2: Option<usize>,
    /// Norm second threshold [default: 0.5]
    #[arg(long)]
    pub tau2: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Files or directories (searched recursively for .mid, .midi, .csv)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Output `.json` file for a single input, otherwise a directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory or file of segmentation JSON
    #[arg(long)]
    pub estimates: PathBuf,
    /// Directory or file of annotations (.csv or .json)
    #[arg(long)]
    pub annotations: PathBuf,
    /// Tolerance [default: one-bar]
    #[arg(long, value_enum)]
    pub tolerance: Option<ToleranceArg>,
    /// Annotation level [default: mid]
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    /// Phrase corrections, CSV with source,level,field,old,new
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// Score the first-stage Norm candidates instead of the refined boundaries
    #[arg(long)]
    pub candidates: bool,
    /// Write PREFIX.json and PREFIX.csv (one pair per tolerance when both)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Write a beat-error histogram CSV
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Histogram bin width in beats
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BIN_BEATS)]
    pub bin_width: f64,
    /// Flat key=value settings file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// Files or directories (searched recursively for .mid, .midi, .csv)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Boundaries per file [default: 5, or the level's count]
    #[arg(long)]
    pub k: Option<usize>,
    /// Use the piano-sonata boundary count for this level (4, 14 or 46)
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Output `.json` file for a single input, otherwise a directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Music files or directories
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Annotation directory or file
    #[arg(long)]
    pub annotations: PathBuf,
    /// Segmentation method [default: g-pelt]
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Starting parameter set for axes not swept
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Values as `a,b,c` or `start:stop:step`
    #[arg(long)]
    pub alpha: Option<String>,
    /// Jump fractions, g-pelt only
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub alpha1: Option<String>,
    #[arg(long)]
    pub tau1: Option<String>,
    /// Whole numbers only
    #[arg(long)]
    pub w2: Option<String>,
    #[arg(long)]
    pub tau2: Option<String>,
    /// Annotation level [default: mid]
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    /// Tolerance [default: one-bar]
    #[arg(long, value_enum)]
    pub tolerance: Option<ToleranceArg>,
    /// Phrase corrections, CSV with source,level,field,old,new
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// Directory for cached segmentations
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write PREFIX.csv and PREFIX.json
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotWhat {
    /// Adjacency novelty curve, one row per note transition
    Novelty,
    /// Norm features per note transition
    Xhat,
    /// Norm segment distance matrix
    Ssm,
    /// Note adjacency matrix
    Adjacency,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// A MIDI or note-list file
    pub input: PathBuf,
    /// What to export
    #[arg(long, value_enum, default_value = "novelty")]
    pub what: PlotWhat,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub input_options: InputArgs,
    /// Output CSV file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Settings read from a `key=value` file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub values: BTreeMap<String, String>,
}

pub const CONFIG_KEYS: [&str; 17] = [
    "method",
    "preset",
    "alpha",
    "beta",
    "penalty",
    "alpha1",
    "tau1",
    "w2",
    "tau2",
    "k",
    "max_notes",
    "ticks_per_quarter",
    "tempo_policy",
    "time_signature",
    "tolerance",
    "level",
    "jobs",
];

impl Config {
    /// Blank lines and `#` comments are skipped; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Config::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => Ok(Config::default()),
        }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`")))
            })
            .transpose()
    }
}

fn level_of(preset: Preset) -> Option<Level> {
    match preset {
        Preset::BpsHigh => Some(Level::High),
        Preset::BpsMid => Some(Level::Mid),
        Preset::BpsLow => Some(Level::Low),
        Preset::SwdMid => None,
    }
}

fn base_params(method: Option<Method>, preset: Option<Preset>) -> Result<MethodParams> {
    let method = method.unwrap_or(Method::GPelt);
    match preset.and_then(level_of) {
        Some(level) if method == Method::GPelt => Ok(MethodParams::bps_g_pelt(level)),
        Some(_) => Err(Error::Config(format!("piano-sonata presets exist for g-pelt only, not {method}"))),
        None => Ok(MethodParams::swd(method)),
    }
}

/// Method parameters from preset, then config, then flags.
pub fn resolve_params(flags: &ParamArgs, config: &Config) -> Result<MethodParams> {
    let method = match flags.method {
        Some(m) => Some(Method::from(m)),
        None => config.get::<Method>("method")?,
    };
    let preset = match flags.preset {
        Some(p) => Some(p),
        None => config.get::<Preset>("preset")?,
    };
    let mut params = base_params(method, preset)?;
    let flag_values = [
        ("alpha", flags.alpha),
        ("beta", flags.beta),
        ("penalty", flags.penalty),
        ("alpha1", flags.alpha1),
        ("tau1", flags.tau1),
        ("w2", flags.w2.map(|w| w as f64)),
        ("tau2", flags.tau2),
    ];
    for (name, flag) in flag_values {
        if let Some(v) = flag.or(config.get::<f64>(name)?) {
            set_param(&mut params, name, v)?;
        }
    }
    params.validate()?;
    Ok(params)
}

fn env_max_notes() -> Result<Option<usize>> {
    match std::env::var(MAX_NOTES_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{MAX_NOTES_ENV} must be a whole number, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Loading and pipeline options from flags, then config, then environment.
pub fn resolve_inputs(flags: &InputArgs, config: &Config) -> Result<(LoadOptions, PipelineOptions)> {
    let mut load = LoadOptions::default();
    if let Some(t) = flags.ticks_per_quarter.or(config.get("ticks_per_quarter")?) {
        if t == 0 {
            return Err(Error::Config("ticks_per_quarter must be positive".into()));
        }
        load.ticks_per_quarter = t;
    }
    let tempo = match flags.tempo_policy {
        Some(t) => Some(t),
        None => config
            .values
            .get("tempo_policy")
            .map(|v| <TempoArg as ValueEnum>::from_str(v, true))
            .transpose()
            .map_err(|_| Error::Config("tempo_policy must be reject or use-first".into()))?,
    };
    load.tempo_policy = match tempo {
        Some(TempoArg::UseFirst) => TempoPolicy::UseFirst,
        _ => TempoPolicy::Reject,
    };
    load.time_signature = match flags.time_signature {
        Some(ts) => Some(ts),
        None => config.get("time_signature")?,
    };
    let mut pipeline = PipelineOptions::default();
    pipeline.adjacency.max_notes = match flags.max_notes {
        Some(m) => m,
        None => match config.get("max_notes")? {
            Some(m) => m,
            None => env_max_notes()?.unwrap_or(DEFAULT_MAX_NOTES),
        },
    };
    Ok((load, pipeline))
}

fn is_music_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("mid" | "midi" | "csv")
    )
}

fn has_extension(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn walk(dir: &Path, keep: &dyn Fn(&Path) -> bool, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, keep, out)?;
        } else if keep(&p) {
            out.push(p);
        }
    }
    Ok(())
}

/// Expands directories recursively. Missing paths are returned as errors
/// alongside the files found.
pub fn expand_inputs(inputs: &[PathBuf], keep: &dyn Fn(&Path) -> bool) -> (Vec<PathBuf>, Vec<(PathBuf, Error)>) {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    for input in inputs {
        if input.is_dir() {
            if let Err(e) = walk(input, keep, &mut files) {
                errors.push((input.clone(), e));
            }
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            let e = std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory");
            errors.push((input.clone(), Error::io(input, e)));
        }
    }
    (files, errors)
}

fn exit_code(ok: usize, failed: usize) -> i32 {
    match (ok, failed) {
        (_, 0) if ok > 0 => EXIT_OK,
        (0, _) => EXIT_FAILURE,
        _ => EXIT_PARTIAL,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes segmentations to `out` (a `.json` file for a single input, else a
/// directory of `<key>.json`) or to stdout.
fn emit_segmentations(segs: &[Segmentation], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) if segs.len() == 1 && has_extension(path, &["json"]) => write_file(path, &segs[0].to_json()?),
        Some(dir) => {
            let mut seen = BTreeSet::new();
            for seg in segs {
                let key = pairing_key(&seg.source);
                if !seen.insert(key.clone()) {
                    return Err(Error::Config(format!("two inputs map to the output name `{key}.json`")));
                }
                write_file(&dir.join(format!("{key}.json")), &seg.to_json()?)?;
            }
            Ok(())
        }
        None => {
            for seg in segs {
                println!("{}", seg.to_json()?);
            }
            Ok(())
        }
    }
}

fn segment_files(
    inputs: &[PathBuf],
    params: &MethodParams,
    load: &LoadOptions,
    pipeline: &PipelineOptions,
    out: Option<&Path>,
) -> i32 {
    let (files, mut errors) = expand_inputs(inputs, &is_music_file);
    let results: Vec<(PathBuf, Result<Segmentation>)> = files
        .par_iter()
        .map(|f| (f.clone(), load_piece(f, load).and_then(|p| run_method_with(&p, params, pipeline))))
        .collect();
    let mut segs = Vec::new();
    for (path, r) in results {
        match r {
            Ok(s) => segs.push(s),
            Err(e) => errors.push((path, e)),
        }
    }
    for (path, e) in &errors {
        eprintln!("{}: {e}", path.display());
    }
    if let Err(e) = emit_segmentations(&segs, out) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    exit_code(segs.len(), errors.len())
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<i32> {
    let config = Config::load(args.input.config.as_deref())?;
    let params = resolve_params(&args.params, &config)?;
    let (load, pipeline) = resolve_inputs(&args.input, &config)?;
    Ok(segment_files(&args.inputs, &params, &load, &pipeline, args.out.as_deref()))
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<i32> {
    let config = Config::load(args.input.config.as_deref())?;
    let level = match args.level {
        Some(l) => Some(Level::from(l)),
        None => config.get::<Level>("level")?,
    };
    let k = match (args.k, config.get::<usize>("k")?, level) {
        (Some(k), _, _) => k,
        (None, Some(k), _) => k,
        (None, None, Some(level)) => level.baseline_k(),
        (None, None, None) => 5,
    };
    let params = MethodParams::equidistant(k);
    params.validate()?;
    let (load, pipeline) = resolve_inputs(&args.input, &config)?;
    Ok(segment_files(&args.inputs, &params, &load, &pipeline, args.out.as_deref()))
}

fn load_patches(path: Option<&Path>) -> Result<Vec<PhrasePatch>> {
    match path {
        Some(p) => parse_phrase_patches(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => Ok(Vec::new()),
    }
}

/// Annotations at `level` from every `.csv`/`.json` under `root`.
fn collect_annotations(root: &Path, level: Level, patches: &[PhrasePatch]) -> (Vec<Annotation>, Vec<(PathBuf, Error)>) {
    let (files, mut errors) = expand_inputs(&[root.to_path_buf()], &|p| has_extension(p, &["csv", "json"]));
    let mut out = Vec::new();
    for f in files {
        match load_annotations(&f, level, patches) {
            Ok(list) => out.extend(list.into_iter().filter(|a| a.level == level)),
            Err(e) => errors.push((f, e)),
        }
    }
    (out, errors)
}

fn resolve_tolerance(flag: Option<ToleranceArg>, config: &Config) -> Result<Vec<ToleranceKind>> {
    match flag {
        Some(t) => Ok(t.kinds()),
        None => match config.values.get("tolerance").map(String::as_str) {
            Some("both") => Ok(ToleranceKind::ALL.to_vec()),
            Some(v) => Ok(vec![v.parse()?]),
            None => Ok(vec![ToleranceKind::OneBar]),
        },
    }
}

fn resolve_level(flag: Option<LevelArg>, config: &Config) -> Result<Level> {
    Ok(match flag {
        Some(l) => l.into(),
        None => config.get("level")?.unwrap_or(Level::Mid),
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let config = Config::load(args.config.as_deref())?;
    let tolerances = resolve_tolerance(args.tolerance, &config)?;
    let level = resolve_level(args.level, &config)?;
    let patches = load_patches(args.patches.as_deref())?;

    let (files, mut errors) = expand_inputs(std::slice::from_ref(&args.estimates), &|p| has_extension(p, &["json"]));
    let mut segs = Vec::new();
    for f in files {
        let parsed = std::fs::read_to_string(&f)
            .map_err(|e| Error::io(&f, e))
            .and_then(|t| Segmentation::from_json(&t));
        match parsed {
            Ok(s) if args.candidates => match s.candidate_view() {
                Some(c) => segs.push(c),
                None => errors.push((f, Error::Config("segmentation has no candidates".into()))),
            },
            Ok(s) => segs.push(s),
            Err(e) => errors.push((f, e)),
        }
    }
    if segs.is_empty() {
        for (p, e) in &errors {
            eprintln!("{}: {e}", p.display());
        }
        eprintln!("error: no segmentations found in {}", args.estimates.display());
        return Ok(EXIT_FAILURE);
    }
    let (annotations, annotation_errors) = collect_annotations(&args.annotations, level, &patches);
    errors.extend(annotation_errors);

    let pairing = pair_by_source(&annotations, &segs)?;
    for key in &pairing.unpaired {
        eprintln!("unpaired: {key}");
    }
    for (p, e) in &errors {
        eprintln!("{}: {e}", p.display());
    }
    if pairing.pairs.is_empty() {
        eprintln!("error: no estimate pairs with an annotation");
        return Ok(EXIT_FAILURE);
    }

    for &tolerance in &tolerances {
        let report = evaluate_pairs(&pairing.pairs, tolerance)?;
        if tolerances.len() > 1 {
            println!("{tolerance}: {}", report.aggregate.summary_line());
        } else {
            println!("{}", report.aggregate.summary_line());
        }
        if let Some(prefix) = &args.out {
            let stem = if tolerances.len() > 1 {
                with_suffix(prefix, &format!("-{tolerance}"))
            } else {
                prefix.clone()
            };
            write_file(&with_suffix(&stem, ".json"), &report.to_json()?)?;
            write_file(&with_suffix(&stem, ".csv"), &report.to_csv()?)?;
        }
    }

    if let Some(path) = &args.histogram {
        let mut counts: Vec<usize> = Vec::new();
        for (a, s) in &pairing.pairs {
            let h = beat_error_histogram(&a.boundaries_beats, &s.boundary_beats(), args.bin_width)?;
            if counts.len() < h.counts.len() {
                counts.resize(h.counts.len(), 0);
            }
            for (i, c) in h.counts.iter().enumerate() {
                counts[i] += c;
            }
        }
        let mut text = String::from("bin_start,bin_end,count\n");
        for (i, c) in counts.iter().enumerate() {
            let lo = i as f64 * args.bin_width;
            let _ = writeln!(text, "{lo},{},{c}", lo + args.bin_width);
        }
        write_file(path, &text)?;
    }

    Ok(if pairing.unpaired.is_empty() && errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let config = Config::load(args.input.config.as_deref())?;
    let method = match args.method {
        Some(m) => Some(Method::from(m)),
        None => config.get("method")?,
    };
    let preset = match args.preset {
        Some(p) => Some(p),
        None => config.get("preset")?,
    };
    let base = base_params(method, preset)?;
    let (load, pipeline) = resolve_inputs(&args.input, &config)?;
    let level = resolve_level(args.level, &config)?;
    let patches = load_patches(args.patches.as_deref())?;

    let (annotations, annotation_errors) = collect_annotations(&args.annotations, level, &patches);
    let mut by_key: BTreeMap<String, Annotation> = BTreeMap::new();
    for a in annotations {
        by_key.insert(pairing_key(&a.source), a);
    }
    let (files, input_errors) = expand_inputs(&args.inputs, &is_music_file);
    let mut corpus = Vec::new();
    let mut problems = annotation_errors.len() + input_errors.len();
    for (p, e) in annotation_errors.iter().chain(&input_errors) {
        eprintln!("{}: {e}", p.display());
    }
    for path in files {
        match by_key.get(&pairing_key(&path.to_string_lossy())) {
            Some(a) => corpus.push(CorpusEntry {
                annotation: a.clone(),
                path,
            }),
            None => {
                eprintln!("unpaired: {}", path.display());
                problems += 1;
            }
        }
    }
    if corpus.is_empty() {
        eprintln!("error: no input pairs with an annotation");
        return Ok(EXIT_FAILURE);
    }

    let mut plan = SweepPlan::new(base, corpus);
    plan.load = load;
    plan.pipeline = pipeline;
    plan.tolerances = resolve_tolerance(args.tolerance, &config)?;
    plan.cache_dir = args.cache.clone();
    let axes = [
        ("alpha", &args.alpha),
        ("beta", &args.beta),
        ("penalty", &args.penalty),
        ("alpha1", &args.alpha1),
        ("tau1", &args.tau1),
        ("w2", &args.w2),
        ("tau2", &args.tau2),
    ];
    for (name, values) in axes {
        if let Some(v) = values {
            plan.grid.insert(name.to_string(), crate::sweep::parse_axis(v)?);
        }
    }

    let table = run_sweep(&plan)?;
    match &args.out {
        Some(prefix) => {
            write_file(&with_suffix(prefix, ".csv"), &table.to_csv()?)?;
            write_file(&with_suffix(prefix, ".json"), &table.to_json()?)?;
        }
        None => print!("{}", table.to_csv()?),
    }
    for f in &table.failures {
        eprintln!("{} [{}]: {}", f.file, f.point, f.message);
    }
    for &t in &plan.tolerances {
        if let Ok(best) = best_params(&table, t) {
            let point: Vec<String> = best.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("best at {t}: {} {}", point.join(" "), best.aggregate.summary_line());
        }
    }
    let failed_files: BTreeSet<&str> = table.failures.iter().map(|f| f.file.as_str()).collect();
    Ok(exit_code(plan.corpus.len() - failed_files.len().min(plan.corpus.len()), failed_files.len() + problems))
}

fn marker(set: &BTreeSet<usize>, i: usize) -> u8 {
    u8::from(set.contains(&i))
}

/// CSV text for `plotdata`.
pub fn plot_csv(piece: &Piece, what: PlotWhat, params: &MethodParams, pipeline: &PipelineOptions) -> Result<String> {
    let beats = |i: usize| piece.onset_beats(i).unwrap_or_else(|| piece.duration_beats());
    let mut out = String::new();
    match what {
        PlotWhat::Novelty | PlotWhat::Adjacency => {
            let seg = run_method_with(piece, params, pipeline)?;
            let bounds: BTreeSet<usize> = seg.boundaries.iter().map(|b| b.note_index).collect();
            if what == PlotWhat::Novelty {
                let curve = graph_novelty(piece, pipeline)?;
                out.push_str("index,note_index,beat,novelty,boundary\n");
                for (i, v) in curve.values.iter().enumerate() {
                    let _ = writeln!(out, "{i},{},{},{v},{}", i + 1, beats(i + 1), marker(&bounds, i + 1));
                }
            } else {
                let m = adjacency_with(&build_graph_with(piece, &pipeline.graph), &pipeline.adjacency)?;
                out.push_str("note_index,beat,boundary");
                for j in 0..m.dim() {
                    let _ = write!(out, ",n{j}");
                }
                out.push('\n');
                for i in 0..m.dim() {
                    let _ = write!(out, "{i},{},{}", beats(i), marker(&bounds, i));
                    for v in m.row(i) {
                        let _ = write!(out, ",{v}");
                    }
                    out.push('\n');
                }
            }
        }
        PlotWhat::Xhat | PlotWhat::Ssm => {
            let norm = params.norm.unwrap_or_default();
            let outcome = run_norm(piece, &norm)?;
            let cands: BTreeSet<usize> = outcome.candidates.iter().copied().collect();
            let bounds: BTreeSet<usize> = outcome.boundaries.iter().copied().collect();
            if what == PlotWhat::Xhat {
                let f = &outcome.features;
                out.push_str("index,note_index,beat,ioi,direction,combined,normalized,candidate,boundary\n");
                for i in 0..f.ioi.len() {
                    let _ = writeln!(
                        out,
                        "{i},{},{},{},{},{},{},{},{}",
                        i + 1,
                        beats(i + 1),
                        f.ioi[i],
                        f.direction[i],
                        f.combined[i],
                        f.normalized[i],
                        marker(&cands, i + 1),
                        marker(&bounds, i + 1)
                    );
                }
            } else {
                let ssm = outcome.ssm.ok_or(Error::TooFewCandidates(outcome.candidates.len()))?;
                let starts: Vec<usize> = std::iter::once(0).chain(outcome.candidates.iter().copied()).collect();
                let n = ssm.matrix.dim();
                out.push_str("segment,start_note,start_beat,boundary");
                for j in 0..n {
                    let _ = write!(out, ",s{j}");
                }
                out.push('\n');
                for (i, &start) in starts.iter().enumerate() {
                    let _ = write!(out, "{i},{start},{},{}", beats(start), marker(&bounds, start));
                    for v in ssm.matrix.row(i) {
                        let _ = write!(out, ",{v}");
                    }
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}

pub fn cmd_plotdata(args: &PlotArgs) -> Result<i32> {
    let config = Config::load(args.input_options.config.as_deref())?;
    let mut flags = args.params.clone();
    if matches!(args.what, PlotWhat::Xhat | PlotWhat::Ssm) && flags.method.is_none() {
        flags.method = Some(MethodArg::Norm);
    }
    let params = resolve_params(&flags, &config)?;
    let (load, pipeline) = resolve_inputs(&args.input_options, &config)?;
    let piece = load_piece(&args.input, &load)?;
    let text = plot_csv(&piece, args.what, &params, &pipeline)?;
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
