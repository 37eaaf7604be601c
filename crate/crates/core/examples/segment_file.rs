// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segment a MIDI or note-list file with every method.
//!
//! ```text
//! cargo run --example segment_file -- path/to/piece.mid
//! ```
//!
//! Without an argument a three-part piece is written to a temporary MIDI
//! file and read back.

use std::path::PathBuf;

use symseg::note_model::{encode_midi, load_piece, LoadOptions};
use symseg::{run_method, Method, MethodParams, Note, Piece, TimingContext};

fn demo_piece() -> Piece {
    let mut notes = Vec::new();
    let mut tick = 0;
    for bar in 0..12u64 {
        let root = [48, 53, 55, 48][(bar % 4) as usize];
        for p in [root, root + 4, root + 7] {
            notes.push(Note::new(p, tick, tick + 1920));
        }
        tick += 1920;
    }
    for i in 0..64u64 {
        let p = 64 + [0, 2, 4, 7, 9, 7, 4, 2][(i % 8) as usize];
        notes.push(Note::new(p, tick, tick + 200));
        tick += 240;
    }
    for bar in 0..12u64 {
        let root = [45, 50, 52, 45][(bar % 4) as usize];
        for p in [root, root + 3, root + 7] {
            notes.push(Note::new(p, tick, tick + 1920));
        }
        tick += 1920;
    }
    Piece::new(notes, TimingContext::default(), "demo.mid").unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = match std::env::args_os().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("symseg_demo.mid");
            std::fs::write(&p, encode_midi(&demo_piece()))?;
            p
        }
    };
    let piece = load_piece(&path, &LoadOptions::default())?;
    println!("{}: {} notes, {:.1} beats", path.display(), piece.len(), piece.duration_beats());

    for method in [Method::GPelt, Method::GWindow, Method::Norm, Method::Equidistant] {
        let seg = run_method(&piece, &MethodParams::swd(method))?;
        let beats: Vec<String> = seg.boundary_beats().iter().map(|b| format!("{b:.1}")).collect();
        println!("{:>12}: {}", method.as_str(), beats.join(" "));
    }
    Ok(())
}
