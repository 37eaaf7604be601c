// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks. Prints one PASS, FAIL or SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The two corpus reproductions run only when their data directories are
//! given:
//!
//! * `SYMSEG_SWD_DIR`: `midi/*.mid` plus `annotations/*.csv` boundary files;
//! * `SYMSEG_BPS_DIR`: `<piece>/notes.csv` plus `<piece>/phrases.csv`, and an
//!   optional `patches.csv` at the top level.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symseg::changepoint::{median_heuristic_gamma, pelt, KernelCost, PeltParams};
use symseg::evaluation::{
    evaluate_pairs, load_annotations, match_boundaries, pair_by_source, parse_phrase_patches,
    Annotation, Level, ToleranceKind,
};
use symseg::graph::{adjacency, build_graph};
use symseg::note_model::{encode_midi, load_piece, parse_midi, LoadOptions};
use symseg::pipeline::{graph_novelty, run_method, scaled_window, Method, MethodParams, PipelineOptions};
use symseg::{NormParams, Segmentation};

enum Outcome {
    Pass(String),
    Fail(String),
    /// The criterion needs data that is not present; reported as a failure
    /// but not counted in the exit status.
    Unverified(String),
}

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Outcome::Pass(pass)
    } else {
        Outcome::Fail(fail)
    }
}

fn pelt_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 600;
    for trial in 0..trials {
        let min_size = 1 + trial % 3;
        let len = rng.gen_range(1..=24);
        let y: Vec<f64> = match trial % 4 {
            // Plateaus with noise, the shape of real novelty curves.
            0 => {
                let mut level = 0.0;
                (0..len)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            level = rng.gen_range(-3.0..3.0);
                        }
                        level + rng.gen_range(-0.3..0.3)
                    })
                    .collect()
            }
            1 => (0..len).map(|_| f64::from(rng.gen_range(0..3u8))).collect(),
            _ => (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let penalty = if trial % 10 == 0 { 0.0 } else { rng.gen_range(0.0..3.0) };
        let cost = KernelCost::new(y.clone(), median_heuristic_gamma(&y)).unwrap();
        let got = pelt(&cost, &PeltParams::new(min_size, 1, penalty).unwrap()).unwrap();
        let want = common::brute_force(&cost, min_size, penalty);
        if got.indices() != want.as_slice() {
            return Outcome::Fail(format!(
                "trial {trial}: T={len} min_size={min_size} p={penalty}: pelt {:?}, exhaustive {want:?}",
                got.indices()
            ));
        }
    }
    Outcome::Pass(format!("{trials} random signals, T <= 24, match exhaustive search"))
}

fn graph_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 250;
    for trial in 0..trials {
        let piece = common::random_piece(&mut rng, 200);
        let graph = build_graph(&piece);
        let got: BTreeSet<_> = graph.edges().iter().map(|e| (e.i, e.j, e.kind)).collect();
        if got != common::oracle_edges(&piece) {
            return Outcome::Fail(format!("trial {trial}: edge set differs from pairwise check"));
        }
        let pairs: BTreeSet<(usize, usize)> = got.iter().map(|&(a, b, _)| (a, b)).collect();
        let m = adjacency(&graph).unwrap();
        let n = m.dim();
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Outcome::Fail(format!("trial {trial}: nonzero diagonal at {i}"));
            }
            for j in 0..n {
                let linked = pairs.contains(&(i.min(j), i.max(j)));
                if m.get(i, j) != m.get(j, i) || (m.get(i, j) == 1.0) != linked {
                    return Outcome::Fail(format!("trial {trial}: matrix entry ({i},{j}) wrong"));
                }
            }
        }
    }
    Outcome::Pass(format!("{trials} random pieces agree with the pairwise check"))
}

fn metric_fixture() -> Outcome {
    let m = match_boundaries(&[10.0, 20.0, 30.0], &[10.4, 25.0], 0.5).unwrap();
    let ok = (m.precision - 0.5).abs() <= 1e-12 && (m.recall - 1.0 / 3.0).abs() <= 1e-12 && (m.f1 - 0.4).abs() <= 1e-12;
    check(
        ok,
        "P=0.5 R=1/3 F1=0.4".into(),
        format!("P={} R={} F1={}", m.precision, m.recall, m.f1),
    )
}

fn two_sections() -> Outcome {
    let start = Instant::now();
    let piece = common::two_section_fixture();
    let params = MethodParams::swd(Method::GPelt);
    let seg = run_method(&piece, &params).unwrap();
    let interior: Vec<usize> = seg.boundaries[..seg.boundaries.len() - 1].iter().map(|b| b.note_index).collect();

    let curve = graph_novelty(&piece, &PipelineOptions::default()).unwrap().values;
    let min_size = scaled_window(0.6, piece.len());
    let jump = ((0.15 * min_size as f64).round() as usize).max(1);
    let oracle = common::optimal_partition(&curve, median_heuristic_gamma(&curve), min_size, jump, 0.7);
    let oracle_notes: Vec<usize> = oracle[..oracle.len() - 1].iter().map(|i| i + 1).collect();
    let elapsed = start.elapsed();

    let ok = interior.len() == 1 && interior[0].abs_diff(60) <= 3 && interior == oracle_notes && elapsed < Duration::from_secs(1);
    check(
        ok,
        format!("single boundary at note {} (change at 60), matches unpruned search", interior[0]),
        format!("boundaries {interior:?}, unpruned search {oracle_notes:?}, {elapsed:?}"),
    )
}

fn music_files(dir: &Path, exts: &[&str]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|x| x.to_str()).is_some_and(|x| exts.contains(&x)) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn segment_all(files: &[PathBuf], params: &MethodParams) -> Vec<Segmentation> {
    files
        .iter()
        .filter_map(|f| load_piece(f, &LoadOptions::default()).and_then(|p| run_method(&p, params)).ok())
        .collect()
}

fn swd_reproduction() -> Outcome {
    let Some(root) = std::env::var_os("SYMSEG_SWD_DIR").map(PathBuf::from) else {
        return Outcome::Unverified("corpus not available, set SYMSEG_SWD_DIR".into());
    };
    let segs = segment_all(&music_files(&root.join("midi"), &["mid", "midi"]), &MethodParams::g_pelt(0.6, 0.15, 0.7));
    let annotations: Vec<Annotation> = music_files(&root.join("annotations"), &["csv", "json"])
        .iter()
        .filter_map(|f| load_annotations(f, Level::Mid, &[]).ok())
        .flatten()
        .filter(|a| a.level == Level::Mid)
        .collect();
    let pairing = match pair_by_source(&annotations, &segs) {
        Ok(p) if !p.pairs.is_empty() => p,
        _ => return Outcome::Fail("no segmentation pairs with an annotation".into()),
    };
    let agg = evaluate_pairs(&pairing.pairs, ToleranceKind::OneBar).unwrap().aggregate;
    check(
        (agg.f1_mean - 0.5640).abs() <= 0.05 && agg.r_mean > agg.p_mean,
        format!("{} files, {}", agg.files, agg.summary_line()),
        format!("{} files, {} (expected F1 0.5640 with R > P)", agg.files, agg.summary_line()),
    )
}

fn bps_reproduction() -> Outcome {
    let Some(root) = std::env::var_os("SYMSEG_BPS_DIR").map(PathBuf::from) else {
        return Outcome::Unverified("corpus not available, set SYMSEG_BPS_DIR".into());
    };
    let patches = std::fs::read_to_string(root.join("patches.csv"))
        .ok()
        .map(|t| parse_phrase_patches(&t).unwrap())
        .unwrap_or_default();
    let notes: Vec<PathBuf> = music_files(&root, &["csv"])
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n == "notes.csv"))
        .collect();
    let load = |level: Level| -> Vec<Annotation> {
        music_files(&root, &["csv"])
            .iter()
            .filter(|p| p.file_name().is_some_and(|n| n == "phrases.csv"))
            .filter_map(|f| load_annotations(f, level, &patches).ok())
            .flatten()
            .filter(|a| a.level == level)
            .collect()
    };
    let score = |annotations: &[Annotation], segs: &[Segmentation], tol| {
        let pairing = pair_by_source(annotations, segs).unwrap();
        evaluate_pairs(&pairing.pairs, tol).unwrap().aggregate
    };

    let low = load(Level::Low);
    let g = score(&low, &segment_all(&notes, &MethodParams::g_pelt(0.1, 0.15, 0.1)), ToleranceKind::OneBar);
    let mut failures = Vec::new();
    if (g.f1_mean - 0.5473).abs() > 0.05 {
        failures.push(format!("g-pelt low F1 {:.4} (expected 0.5473)", g.f1_mean));
    }
    let expected = [
        (Level::High, ToleranceKind::OneBeat, 0.2233),
        (Level::Mid, ToleranceKind::OneBeat, 0.1155),
        (Level::Low, ToleranceKind::OneBeat, 0.2417),
        (Level::High, ToleranceKind::OneBar, 0.3040),
        (Level::Mid, ToleranceKind::OneBar, 0.2447),
        (Level::Low, ToleranceKind::OneBar, 0.4254),
    ];
    for (level, tol, want) in expected {
        let base = segment_all(&notes, &MethodParams::equidistant(level.baseline_k()));
        let got = score(&load(level), &base, tol).f1_mean;
        if (got - want).abs() > 0.05 {
            failures.push(format!("baseline {level} {tol} F1 {got:.4} (expected {want})"));
        }
    }
    check(
        failures.is_empty(),
        format!("g-pelt low F1 {:.4}; baselines within 0.05", g.f1_mean),
        failures.join("; "),
    )
}

fn invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pieces = 100;
    for trial in 0..pieces {
        let piece = common::random_piece(&mut rng, 120);
        let shift = rng.gen_range(1..5000u64);
        if build_graph(&piece) != build_graph(&common::shifted(&piece, shift)) {
            return Outcome::Fail(format!("piece {trial}: graph changed under a shift of {shift} ticks"));
        }
        if piece.len() >= 4 {
            let norm = MethodParams::norm(NormParams::default());
            let a = run_method(&piece, &norm).unwrap();
            let b = run_method(&common::transposed(&piece, rng.gen_range(-12..=12)), &norm).unwrap();
            let idx = |s: &Segmentation| s.boundaries.iter().map(|b| b.note_index).collect::<Vec<_>>();
            if idx(&a) != idx(&b) {
                return Outcome::Fail(format!("piece {trial}: norm boundaries changed under transposition"));
            }
            let mut last = usize::MAX;
            for p in [0.0, 0.1, 0.3, 0.7, 1.5, 3.0, 10.0] {
                let count = run_method(&piece, &MethodParams::g_pelt(0.6, 0.15, p)).unwrap().boundaries.len();
                if count > last {
                    return Outcome::Fail(format!("piece {trial}: boundary count rose to {count} at penalty {p}"));
                }
                last = count;
            }
        }
        let r: Vec<f64> = (0..rng.gen_range(0..15)).map(|_| rng.gen_range(0.0..100.0)).collect();
        let e: Vec<f64> = (0..rng.gen_range(0..15)).map(|_| rng.gen_range(0.0..100.0)).collect();
        let mut last = 0;
        for tol in [0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 50.0] {
            let m = match_boundaries(&r, &e, tol).unwrap().matched;
            if m < last {
                return Outcome::Fail(format!("case {trial}: matches fell to {m} at tolerance {tol}"));
            }
            last = m;
        }
    }
    Outcome::Pass(format!(
        "{pieces} pieces: shift, transposition, penalty and tolerance monotonicity hold"
    ))
}

fn mutate<R: Rng>(rng: &mut R, bytes: &mut Vec<u8>) {
    for _ in 0..rng.gen_range(1..=8) {
        if bytes.is_empty() {
            bytes.push(rng.gen());
            continue;
        }
        let at = rng.gen_range(0..bytes.len());
        match rng.gen_range(0..6) {
            0 => bytes[at] ^= 1 << rng.gen_range(0..8),
            1 => bytes[at] = rng.gen(),
            2 => bytes.insert(at, rng.gen()),
            3 => {
                bytes.remove(at);
            }
            4 => bytes.truncate(at),
            _ => {
                let run = rng.gen_range(1..8).min(bytes.len() - at);
                let fill = if rng.gen_bool(0.5) { 0xFF } else { 0x80 };
                bytes[at..at + run].fill(fill);
            }
        }
    }
}

fn parser_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seeds: Vec<Vec<u8>> = (0..20).map(|_| encode_midi(&common::random_piece(&mut rng, 60))).collect();
    let files = 10_000;
    let mut typed_errors = 0;
    let mut slowest = Duration::ZERO;
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let outcome = (|| {
    for i in 0..files {
        let mut bytes = seeds[i % seeds.len()].clone();
        mutate(&mut rng, &mut bytes);
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| parse_midi(&bytes)));
        let took = start.elapsed();
        slowest = slowest.max(took);
        match result {
            Err(_) => return Outcome::Fail(format!("file {i}: parser panicked")),
            Ok(Err(_)) => typed_errors += 1,
            Ok(Ok(_)) => {}
        }
        if took > Duration::from_secs(5) {
            return Outcome::Fail(format!("file {i}: parsing took {took:?}"));
        }
    }
    Outcome::Pass(format!(
        "{files} mutated files, {typed_errors} typed errors, no panics, slowest {slowest:?}"
    ))
    })();
    std::panic::set_hook(default_hook);
    outcome
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1 pelt exactness", pelt_exactness),
        ("2 graph soundness", graph_soundness),
        ("3 metric fixture", metric_fixture),
        ("4 two-section recovery", two_sections),
        ("5 swd reproduction", swd_reproduction),
        ("6 bps reproduction", bps_reproduction),
        ("7 invariances", invariances),
        ("8 midi parser fuzz", parser_fuzz),
    ];
    let (mut passed, mut failed, mut unverified) = (0, 0, 0);
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(run).unwrap_or_else(|_| Outcome::Fail("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(msg) => {
                passed += 1;
                println!("PASS {name}: {msg} ({secs:.2}s)");
            }
            Outcome::Unverified(msg) => {
                unverified += 1;
                println!("FAIL {name}: not verified, {msg}");
            }
            Outcome::Fail(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} ({secs:.2}s)");
            }
        }
    }
    println!("{passed} passed, {failed} failed, {unverified} not verifiable without data");
    if failed > 0 {
        std::process::exit(1);
    }
}
