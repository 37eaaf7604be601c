// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid search over window scale and penalty on a generated corpus, with an
//! on-disk result cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symseg::note_model::encode_midi;
use symseg::sweep::{best_params, run_sweep, CorpusEntry, SweepPlan};
use symseg::{Annotation, Level, Method, MethodParams, Note, Piece, TimingContext, ToleranceKind};

/// Sections alternating between chords and runs; returns the piece and the
/// beats where sections end.
fn sectioned(rng: &mut ChaCha8Rng) -> (Piece, Vec<f64>) {
    let mut notes = Vec::new();
    let mut bounds = Vec::new();
    let mut beat = 0u64;
    for section in 0..rng.gen_range(3..6) {
        let bars = rng.gen_range(3..7u64);
        for b in 0..bars * 4 {
            let on = (beat + b) * 480;
            if section % 2 == 0 {
                let root = rng.gen_range(45..55u8);
                for p in [root, root + 4, root + 7] {
                    notes.push(Note::new(p, on, on + 480));
                }
            } else {
                for h in 0..2 {
                    notes.push(Note::new(rng.gen_range(62..80), on + h * 240, on + h * 240 + 180));
                }
            }
        }
        beat += bars * 4;
        bounds.push(beat as f64);
    }
    (Piece::new(notes, TimingContext::default(), "").unwrap(), bounds)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("symseg_sweep_demo");
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut corpus = Vec::new();
    for i in 0..6 {
        let (piece, bounds) = sectioned(&mut rng);
        let path = dir.join(format!("piece{i}.mid"));
        std::fs::write(&path, encode_midi(&piece))?;
        let annotation = Annotation::new(format!("piece{i}.csv"), Level::Mid, bounds)?;
        corpus.push(CorpusEntry { path, annotation });
    }

    let mut plan = SweepPlan::new(MethodParams::swd(Method::GPelt), corpus)
        .with_axis("alpha", vec![0.3, 0.6, 1.2])
        .with_axis("penalty", vec![0.2, 0.7, 2.0]);
    plan.cache_dir = Some(dir.join("cache"));

    let table = run_sweep(&plan)?;
    print!("{}", table.to_csv()?);
    println!("cache: {} hits, {} misses", table.cache.hits, table.cache.misses);
    for kind in ToleranceKind::ALL {
        let best = best_params(&table, kind)?;
        println!("best at {kind}: {:?} {}", best.point, best.aggregate.summary_line());
    }
    Ok(())
}
