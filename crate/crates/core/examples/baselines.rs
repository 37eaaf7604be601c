// SPDX-License-Identifier: MIT OR Apache-2.0

//! Equally spaced boundaries as a reference point for each annotation level.

use symseg::evaluation::equidistant_baseline;
use symseg::{match_boundaries, Level};

fn main() -> symseg::Result<()> {
    let duration = 192.0;
    let truth = [
        (Level::High, vec![64.0, 128.0, 192.0]),
        (Level::Mid, vec![16.0, 32.0, 48.0, 64.0, 80.0, 96.0, 112.0, 128.0, 160.0, 192.0]),
        (Level::Low, (1..=48).map(|i| f64::from(i) * 4.0).collect()),
    ];
    for (level, reference) in truth {
        let k = level.baseline_k();
        let estimate = equidistant_baseline(duration, k)?;
        let one_beat = match_boundaries(&reference, &estimate, 1.0)?;
        let one_bar = match_boundaries(&reference, &estimate, 4.0)?;
        println!("{level:>4} k={k:>2}: F1 {:.3} (one beat), {:.3} (one bar)", one_beat.f1, one_bar.f1);
    }
    Ok(())
}
