// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixtures and slow reference implementations shared by integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use symseg::changepoint::KernelCost;
use symseg::graph::EdgeKind;
use symseg::{Note, Piece, TimingContext};

/// Notes on a coarse tick grid so that equal onsets, touching notes and
/// overlaps all occur often.
pub fn random_piece<R: Rng>(rng: &mut R, max_notes: usize) -> Piece {
    let n = rng.gen_range(1..=max_notes);
    let span = (n as u64 / 2 + 4) * 120;
    let notes = (0..n)
        .map(|_| {
            let on = rng.gen_range(0..span / 120) * 120;
            let len = rng.gen_range(1..=8u64) * 120;
            Note::new(rng.gen_range(36..=96), on, on + len).with_velocity(rng.gen_range(1..=127))
        })
        .collect();
    Piece::new(notes, TimingContext::default(), "random.mid").unwrap()
}

/// Same as [`random_piece`] with every tick shifted by `delta`.
pub fn shifted(piece: &Piece, delta: u64) -> Piece {
    let notes = piece
        .notes()
        .iter()
        .map(|n| Note { onset_ticks: n.onset_ticks + delta, offset_ticks: n.offset_ticks + delta, ..*n })
        .collect();
    Piece::new(notes, *piece.timing(), piece.source_path()).unwrap()
}

pub fn transposed(piece: &Piece, semitones: i16) -> Piece {
    let notes = piece
        .notes()
        .iter()
        .map(|n| Note { pitch: (i16::from(n.pitch) + semitones) as u8, ..*n })
        .collect();
    Piece::new(notes, *piece.timing(), piece.source_path()).unwrap()
}

/// Every pair checked against the three relation definitions.
pub fn oracle_edges(piece: &Piece) -> BTreeSet<(usize, usize, EdgeKind)> {
    let notes = piece.notes();
    let mut out = BTreeSet::new();
    for i in 0..notes.len() {
        for j in i + 1..notes.len() {
            let (a, b) = (&notes[i], &notes[j]);
            if a.onset_ticks == b.onset_ticks {
                out.insert((i, j, EdgeKind::Onset));
            }
            if a.offset_ticks == b.onset_ticks || b.offset_ticks == a.onset_ticks {
                out.insert((i, j, EdgeKind::Consecutive));
            }
            let a_holds_b = a.onset_ticks < b.onset_ticks && b.onset_ticks < a.offset_ticks;
            let b_holds_a = b.onset_ticks < a.onset_ticks && a.onset_ticks < b.offset_ticks;
            if a_holds_b || b_holds_a {
                out.insert((i, j, EdgeKind::Overlap));
            }
        }
    }
    out
}

/// Within-segment kernel scatter by the textbook double sum.
pub fn naive_cost(y: &[f64], gamma: f64, a: usize, b: usize) -> f64 {
    let seg = &y[a..b];
    let n = seg.len() as f64;
    let mut total = 0.0;
    for &u in seg {
        for &v in seg {
            total += (-gamma * (u - v) * (u - v)).exp();
        }
    }
    (n - total / n).max(0.0)
}

/// Optimal partitioning without pruning, over every admissible last
/// changepoint, using [`naive_cost`].
pub fn optimal_partition(y: &[f64], gamma: f64, min_size: usize, jump: usize, penalty: f64) -> Vec<usize> {
    let n = y.len();
    if n < 2 * min_size {
        return vec![n];
    }
    let ok = |t: usize| t.is_multiple_of(jump) && t >= min_size && t + min_size <= n;
    let mut f = vec![f64::INFINITY; n + 1];
    let mut last = vec![0; n + 1];
    f[0] = 0.0;
    for t in 1..=n {
        if t != n && !ok(t) {
            continue;
        }
        for s in (0..t).filter(|&s| s == 0 || ok(s)) {
            if t - s < min_size || !f[s].is_finite() {
                continue;
            }
            let v = f[s] + naive_cost(y, gamma, s, t) + penalty;
            if v < f[t] {
                f[t] = v;
                last[t] = s;
            }
        }
    }
    let mut cps = vec![n];
    let mut t = n;
    while last[t] > 0 {
        t = last[t];
        cps.push(t);
    }
    cps.reverse();
    cps
}

/// Exhaustive search over every segmentation with segments of at least
/// `min_size` points, skipping prefixes already worse than the best total. The objective is accumulated left to right as
/// `(total + cost) + penalty`. Among equal totals the segmentation whose
/// changepoints, read from the last one backwards, are smallest wins.
pub fn brute_force(cost: &KernelCost, min_size: usize, penalty: f64) -> Vec<usize> {
    let n = cost.len();
    if n < 2 * min_size {
        return vec![n];
    }
    let table: Vec<Vec<f64>> = (0..=n)
        .map(|a| (0..=n).map(|b| if a < b { cost.segment_cost(a, b).unwrap() } else { f64::NAN }).collect())
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn go(
        start: usize,
        total: f64,
        n: usize,
        min_size: usize,
        penalty: f64,
        table: &[Vec<f64>],
        path: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        for end in start + min_size..=n {
            if end != n && end + min_size > n {
                continue;
            }
            let t = (total + table[start][end]) + penalty;
            // Totals only grow along a path, so a strictly worse prefix cannot win or tie.
            if best.as_ref().is_some_and(|(b, _)| t > *b) {
                continue;
            }
            path.push(end);
            if end == n {
                let better = match best {
                    None => true,
                    Some((b, p)) => t < *b || (t == *b && path.iter().rev().lt(p.iter().rev())),
                };
                if better {
                    *best = Some((t, path.clone()));
                }
            } else {
                go(end, t, n, min_size, penalty, table, path, best);
            }
            path.pop();
        }
    }
    go(0, 0.0, n, min_size, penalty, &table, &mut path, &mut best);
    best.unwrap().1
}

/// Maximum bipartite matching by augmenting paths.
pub fn kuhn_matching(reference: &[f64], estimate: &[f64], tolerance: f64) -> usize {
    let adj: Vec<Vec<usize>> = reference
        .iter()
        .map(|r| (0..estimate.len()).filter(|&j| (r - estimate[j]).abs() <= tolerance).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; estimate.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..reference.len())
        .filter(|&i| augment(i, &adj, &mut vec![false; estimate.len()], &mut owner))
        .count()
}

/// Twenty sustained three-note chords, then sixty detached single notes.
pub fn two_section_fixture() -> Piece {
    let mut notes = Vec::new();
    for c in 0..20u64 {
        let root = 48 + (c % 4) as u8 * 2;
        for p in [root, root + 4, root + 7] {
            notes.push(Note::new(p, c * 480, c * 480 + 480));
        }
    }
    for m in 0..60u64 {
        let on = 9600 + m * 480;
        notes.push(Note::new(60 + [0, 2, 4, 5, 7, 5, 4, 2][(m % 8) as usize], on, on + 240));
    }
    Piece::new(notes, TimingContext::default(), "two_sections.mid").unwrap()
}
