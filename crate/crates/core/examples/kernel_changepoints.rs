// SPDX-License-Identifier: MIT OR Apache-2.0

//! Changepoint detection on a plain numeric signal: exact penalized search
//! and the sliding-window detector side by side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symseg::changepoint::discrepancy_curve;
use symseg::{pelt, window_detect, KernelCost, PeltParams, SelectionRule};

fn main() -> symseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let levels = [(0.0, 40), (3.0, 25), (-1.0, 50), (2.0, 35)];
    let signal: Vec<f64> = levels
        .iter()
        .flat_map(|&(mean, len)| (0..len).map(move |_| mean))
        .map(|m| m + rng.gen_range(-0.6..0.6))
        .collect();
    println!("true changes: 40 65 115 (n = {})", signal.len());

    let cost = KernelCost::with_median_gamma(signal)?;
    println!("gamma = {:.4}", cost.gamma());

    for penalty in [1.0, 20.0, 60.0] {
        let cps = pelt(&cost, &PeltParams::new(5, 1, penalty)?)?;
        println!("pelt  penalty {penalty:>4}: {:?}", cps.interior());
    }
    for jump in [1, 5] {
        let cps = pelt(&cost, &PeltParams::new(5, jump, 2.0)?)?;
        println!("pelt  jump {jump}: {:?}", cps.interior());
    }

    let window = 20;
    let d = discrepancy_curve(&cost, window)?;
    let peak = d.values.iter().copied().fold(f64::MIN, f64::max);
    println!("window {window}: max discrepancy {peak:.3}");
    println!("window, 3 peaks: {:?}", window_detect(&cost, window, SelectionRule::Count(3))?.interior());
    println!("window, ratio 0.5: {:?}", window_detect(&cost, window, SelectionRule::PenaltyRatio(0.5))?.interior());
    Ok(())
}
