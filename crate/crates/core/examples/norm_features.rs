// SPDX-License-Identifier: MIT OR Apache-2.0

//! The feature-normalization method step by step: per-note features,
//! first-pass candidates, and the boundaries kept after the second pass.

use symseg::norm_method::{features, run_norm};
use symseg::{NormParams, Note, Piece, TimingContext};

fn main() -> symseg::Result<()> {
    // Four phrases of rising eighths, each ending on a long note.
    let mut notes = Vec::new();
    let mut tick = 0;
    for phrase in 0..4u8 {
        for i in 0..7u8 {
            notes.push(Note::new(60 + phrase + i * 2, tick, tick + 240));
            tick += 240;
        }
        notes.push(Note::new(72 - phrase, tick, tick + 1440));
        tick += 1440;
    }
    let piece = Piece::new(notes, TimingContext::default(), "phrases.mid")?;

    let f = features(&piece)?;
    println!("transition  ioi  dir  combined  normalized");
    for i in 0..f.ioi.len() {
        println!("{:>10} {:>4.1} {:>4} {:>9.2} {:>11.2}", i + 1, f.ioi[i], f.direction[i], f.combined[i], f.normalized[i]);
    }

    let params = NormParams::default();
    let out = run_norm(&piece, &params)?;
    println!("first window {}: candidates {:?}", out.first_window, out.candidates);
    println!("boundaries {:?}", out.boundaries);
    Ok(())
}
