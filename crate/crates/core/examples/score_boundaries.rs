// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scoring estimated boundaries against annotations: a single match, the
//! two tolerances, an error histogram, and a small corpus report.

use symseg::evaluation::{beat_error_histogram, tolerance_for_signature};
use symseg::pipeline::Boundary;
use symseg::{evaluate_corpus, match_boundaries, Annotation, Level, Method, MethodParams, Segmentation, TimeSignature, ToleranceKind};

fn estimate(source: &str, beats: &[f64], signature: TimeSignature) -> Segmentation {
    Segmentation {
        source: source.into(),
        method: Method::GPelt,
        params: MethodParams::swd(Method::GPelt),
        time_signature: signature,
        includes_final: true,
        boundaries: beats.iter().map(|&beat| Boundary { note_index: 0, beat, second: beat / 2.0 }).collect(),
        candidates: None,
    }
}

fn main() -> symseg::Result<()> {
    let reference = [16.0, 32.0, 48.0, 64.0];
    let estimated = [15.0, 30.0, 33.5, 52.0, 64.0];
    for kind in ToleranceKind::ALL {
        let tol = tolerance_for_signature(kind, TimeSignature::default());
        let m = match_boundaries(&reference, &estimated, tol)?;
        println!("{kind} (±{tol}): matched {} of {}/{}, P={:.3} R={:.3} F1={:.3}", m.matched, m.n_ref, m.n_est, m.precision, m.recall, m.f1);
        println!("  pairs {:?}", m.pairs);
    }

    let hist = beat_error_histogram(&reference, &estimated, 2.0)?;
    for (i, c) in hist.counts.iter().enumerate() {
        println!("  [{:>2}, {:>2}) {}", i * 2, i * 2 + 2, "*".repeat(*c));
    }

    let waltz = TimeSignature::new(3, 4)?;
    let annotations = vec![
        Annotation::new("songs/minuet.csv", Level::Mid, vec![12.0, 24.0, 48.0])?,
        Annotation::new("songs/march.csv", Level::Mid, vec![16.0, 32.0, 64.0])?,
    ];
    let estimates = vec![
        estimate("out/minuet.mid", &[11.0, 26.0, 39.0, 48.0], waltz),
        estimate("out/march.mid", &[16.0, 36.0, 64.0], TimeSignature::default()),
    ];
    let report = evaluate_corpus(&annotations, &estimates, ToleranceKind::OneBar)?;
    print!("{}", report.to_csv()?);
    println!("{}", report.aggregate.summary_line());
    Ok(())
}
