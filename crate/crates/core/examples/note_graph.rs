// SPDX-License-Identifier: MIT OR Apache-2.0

//! Build the note graph of a short passage, print its edges and draw the
//! novelty curve as a bar chart.

use symseg::graph::{EdgeKind, NoveltySource};
use symseg::{adjacency, build_graph, novelty, Note, Piece, TimingContext};

fn main() -> symseg::Result<()> {
    // A held bass under a running line, then block chords.
    let mut notes = vec![Note::new(36, 0, 3840)];
    for i in 0..16u64 {
        notes.push(Note::new(60 + (i % 5) as u8 * 2, i * 240, i * 240 + 240));
    }
    for c in 0..8u64 {
        let on = 3840 + c * 480;
        for p in [55, 59, 62] {
            notes.push(Note::new(p, on, on + 480));
        }
    }
    let piece = Piece::new(notes, TimingContext::default(), "passage.mid")?;

    let graph = build_graph(&piece);
    for kind in [EdgeKind::Onset, EdgeKind::Consecutive, EdgeKind::Overlap] {
        let n = graph.edges().iter().filter(|e| e.kind == kind).count();
        println!("{kind:?}: {n} edges");
    }

    let matrix = adjacency(&graph)?;
    let curve = novelty(&matrix, NoveltySource::AdjacencyMatrix)?;
    let top = curve.values.iter().copied().fold(0.0f64, f64::max).max(1e-12);
    for (i, v) in curve.values.iter().enumerate() {
        let bar = "#".repeat((v / top * 40.0).round() as usize);
        println!("{:>3} {:>6.3} {bar}", i + 1, v);
    }
    Ok(())
}
