// SPDX-License-Identifier: MIT OR Apache-2.0

//! Penalized changepoint detection over 1-D signals with an RBF kernel cost.
//!
//! The segment cost is the within-segment scatter in the RBF feature space:
//!
//! ```text
//! C(a, b) = sum_{t in [a,b)} K(t,t) - 1/(b-a) * sum_{s,t in [a,b)} K(s,t)
//! K(s,t)  = exp(-gamma * (y_s - y_t)^2)
//! ```
//!
//! Every route to a cost (direct [`KernelCost::segment_cost`], the incremental
//! sums inside [`pelt`], the banded sums of [`window_detect`]) adds the kernel
//! terms in the same order, so the three agree bit for bit.

use crate::error::{Error, Result};

/// Signals up to this length get a dense, precomputed Gram matrix; longer
/// ones evaluate kernel entries on demand with the same expression.
pub const DENSE_GRAM_LIMIT: usize = 2048;

#[inline]
fn rbf(gamma: f64, a: f64, b: f64) -> f64 {
    let d = a - b;
    (-(gamma * (d * d))).exp()
}

/// Cost from the segment length and its canonical pair sum.
#[inline]
fn finish_cost(len: usize, pair_sum: f64) -> f64 {
    let n = len as f64;
    (n - pair_sum / n).max(0.0)
}

#[derive(Clone, Debug)]
pub struct KernelCost {
    signal: Vec<f64>,
    gamma: f64,
    gram: Option<Vec<f64>>,
}

impl KernelCost {
    pub fn new(signal: Vec<f64>, gamma: f64) -> Result<Self> {
        let mut cost = Self::lazy(signal, gamma)?;
        if cost.len() <= DENSE_GRAM_LIMIT {
            let n = cost.len();
            let mut gram = vec![1.0; n * n];
            for s in 0..n {
                for t in s + 1..n {
                    let k = rbf(cost.gamma, cost.signal[s], cost.signal[t]);
                    gram[s * n + t] = k;
                    gram[t * n + s] = k;
                }
            }
            cost.gram = Some(gram);
        }
        Ok(cost)
    }

    /// Never materializes the Gram matrix.
    pub fn lazy(signal: Vec<f64>, gamma: f64) -> Result<Self> {
        if signal.is_empty() {
            return Err(Error::InvalidParams("kernel cost needs a non-empty signal".into()));
        }
        if signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("signal contains non-finite values".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
        }
        Ok(KernelCost {
            signal,
            gamma,
            gram: None,
        })
    }

    /// Uses [`median_heuristic_gamma`] for the bandwidth.
    pub fn with_median_gamma(signal: Vec<f64>) -> Result<Self> {
        let gamma = median_heuristic_gamma(&signal);
        Self::new(signal, gamma)
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn has_dense_gram(&self) -> bool {
        self.gram.is_some()
    }

    #[inline]
    pub fn kernel(&self, s: usize, t: usize) -> f64 {
        match &self.gram {
            Some(g) => g[s * self.signal.len() + t],
            None if s == t => 1.0,
            None => rbf(self.gamma, self.signal[s], self.signal[t]),
        }
    }

    /// Kernelized mean-change cost of `[start, end)`.
    pub fn segment_cost(&self, start: usize, end: usize) -> Result<f64> {
        if start >= end || end > self.len() {
            return Err(Error::EmptySegment { start, end });
        }
        let mut pair_sum = 0.0;
        for t in start..end {
            let mut r = 0.0;
            for s in (start..t).rev() {
                r += self.kernel(s, t);
            }
            pair_sum += 1.0 + 2.0 * r;
        }
        Ok(finish_cost(end - start, pair_sum))
    }
}

/// `1 / median((y_s - y_t)^2)` over all pairs `s < t`; `1.0` when the median
/// is zero (or its reciprocal overflows) or fewer than two points are given.
pub fn median_heuristic_gamma(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 1.0;
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pairs = n * (n - 1) / 2;
    let median_sq = if pairs % 2 == 1 {
        let d = kth_smallest_difference(&sorted, pairs / 2 + 1);
        d * d
    } else {
        let lo = kth_smallest_difference(&sorted, pairs / 2);
        let hi = kth_smallest_difference(&sorted, pairs / 2 + 1);
        (lo * lo + hi * hi) / 2.0
    };
    let gamma = 1.0 / median_sq;
    if median_sq > 0.0 && gamma.is_finite() {
        gamma
    } else {
        1.0
    }
}

/// k-th smallest (1-based) of `sorted[j] - sorted[i]`, `i < j`, without
/// materializing the pairs: bisect over the bit patterns of non-negative
/// floats, which order like the values themselves.
fn kth_smallest_difference(sorted: &[f64], k: usize) -> f64 {
    let count_le = |d: f64| {
        let mut count = 0usize;
        let mut i = 0;
        for j in 0..sorted.len() {
            while sorted[j] - sorted[i] > d {
                i += 1;
            }
            count += j - i;
        }
        count
    };
    let (mut lo, mut hi) = (0u64, (sorted[sorted.len() - 1] - sorted[0]).to_bits());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count_le(f64::from_bits(mid)) >= k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    f64::from_bits(lo)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeltParams {
    /// Smallest admissible segment length.
    pub min_size: usize,
    /// Changepoints are restricted to multiples of `jump`.
    pub jump: usize,
    pub penalty: f64,
}

impl PeltParams {
    pub fn new(min_size: usize, jump: usize, penalty: f64) -> Result<Self> {
        let params = PeltParams {
            min_size,
            jump,
            penalty,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_size == 0 {
            return Err(Error::InvalidParams("min_size must be at least 1".into()));
        }
        if self.jump == 0 {
            return Err(Error::InvalidParams("jump must be at least 1".into()));
        }
        if !(self.penalty.is_finite() && self.penalty >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "penalty must be finite and non-negative, got {}",
                self.penalty
            )));
        }
        Ok(())
    }
}

/// Segment end indices, strictly increasing, the last one equal to the signal
/// length.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Changepoints {
    indices: Vec<usize>,
}

impl Changepoints {
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Changepoints { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// All indices except the trailing signal length.
    pub fn interior(&self) -> &[usize] {
        &self.indices[..self.indices.len().saturating_sub(1)]
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.indices
    }

    /// Checks ordering, the terminal index, jump alignment and segment lengths.
    pub fn is_valid(&self, len: usize, min_size: usize, jump: usize) -> bool {
        if self.indices.last() != Some(&len) {
            return false;
        }
        let mut prev = 0;
        for (k, &idx) in self.indices.iter().enumerate() {
            let is_last = k + 1 == self.indices.len();
            if idx <= prev && !(idx == 0 && len == 0) {
                return false;
            }
            if !is_last && idx % jump != 0 {
                return false;
            }
            if self.indices.len() > 1 && idx - prev < min_size {
                return false;
            }
            prev = idx;
        }
        true
    }
}

struct Candidate {
    start: usize,
    pair_sum: f64,
    /// Dominated from this index on.
    retire_at: usize,
}

/// Exact minimizer of `sum of segment costs + penalty * #changepoints` over
/// segmentations with segments of at least `min_size` points and changepoints
/// on multiples of `jump`. Ties go to the earliest last changepoint.
pub fn pelt(cost: &KernelCost, params: &PeltParams) -> Result<Changepoints> {
    params.validate()?;
    let n = cost.len();
    let PeltParams {
        min_size,
        jump,
        penalty,
    } = *params;
    if n < 2 * min_size {
        return Ok(Changepoints { indices: vec![n] });
    }
    let admissible = |t: usize| t.is_multiple_of(jump) && t >= min_size && t + min_size <= n;

    let mut best = vec![f64::INFINITY; n + 1];
    let mut prev = vec![0usize; n + 1];
    best[0] = 0.0;
    let mut active = vec![Candidate {
        start: 0,
        pair_sum: 0.0,
        retire_at: usize::MAX,
    }];
    let mut backward = Vec::with_capacity(n);

    for t in 1..=n {
        // Fold point x = t - 1 into every active segment [s, x].
        let x = t - 1;
        let lowest = active.first().map_or(x, |c| c.start);
        backward.clear();
        let mut r = 0.0;
        for u in (lowest..x).rev() {
            r += cost.kernel(u, x);
            backward.push(r);
        }
        for cand in &mut active {
            // backward[k] holds the sum over u in [x-1-k, x).
            let inner = if cand.start < x {
                backward[x - 1 - cand.start]
            } else {
                0.0
            };
            cand.pair_sum += 1.0 + 2.0 * inner;
        }

        if t != n && !admissible(t) {
            continue;
        }
        active.retain(|c| c.retire_at > t);

        let mut f_t = f64::INFINITY;
        let mut arg = 0;
        for cand in &active {
            if t - cand.start < min_size {
                continue;
            }
            let value = best[cand.start] + finish_cost(t - cand.start, cand.pair_sum) + penalty;
            if value < f_t {
                f_t = value;
                arg = cand.start;
            }
        }
        best[t] = f_t;
        prev[t] = arg;

        if t == n || !f_t.is_finite() {
            continue;
        }
        // The kernel cost never increases when a segment is split, so a start
        // with F(s) + C(s,t) > F(t) loses to t for every end at or past
        // t + min_size. The margin absorbs rounding in that inequality.
        let margin = 1e-9 * (1.0 + f_t.abs());
        for cand in &mut active {
            if t - cand.start >= min_size
                && cand.retire_at == usize::MAX
                && best[cand.start] + finish_cost(t - cand.start, cand.pair_sum) > f_t + margin
            {
                cand.retire_at = t + min_size;
            }
        }
        active.push(Candidate {
            start: t,
            pair_sum: 0.0,
            retire_at: usize::MAX,
        });
    }

    let mut indices = vec![n];
    let mut t = n;
    while t > 0 {
        t = prev[t];
        if t > 0 {
            indices.push(t);
        }
    }
    indices.reverse();
    Ok(Changepoints { indices })
}

/// How peaks of the discrepancy curve become changepoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectionRule {
    /// Keep peaks with `d(i) > ratio * max(d)`.
    PenaltyRatio(f64),
    /// Keep the `k` highest peaks (earlier index first on ties).
    Count(usize),
}

/// Discrepancy values `d(i)` for split points `i = start, start + 1, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discrepancy {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Discrepancy {
    pub fn get(&self, i: usize) -> Option<f64> {
        i.checked_sub(self.start).and_then(|k| self.values.get(k)).copied()
    }
}

/// `d(i) = C(i-h, i+h) - C(i-h, i) - C(i, i+h)` with `h = window / 2`, for
/// every `i` in `[h, T-h]`.
pub fn discrepancy_curve(cost: &KernelCost, window: usize) -> Result<Discrepancy> {
    let n = cost.len();
    if window < 2 {
        return Err(Error::InvalidParams(format!("window must be at least 2, got {window}")));
    }
    if window >= n {
        return Err(Error::WindowTooLarge { window, len: n });
    }
    let half = window / 2;
    let span = 2 * half;

    // band[t][k] = sum_{u = t-1 down to t-1-k} K(u, t): the inner sums of the
    // canonical pair-sum order, for look-backs shorter than one full window.
    let band: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let depth = t.min(span);
            let mut acc = 0.0;
            (1..=depth)
                .map(|k| {
                    acc += cost.kernel(t - k, t);
                    acc
                })
                .collect()
        })
        .collect();
    let seg = |a: usize, b: usize| {
        let mut pair_sum = 0.0;
        for (t, row) in band.iter().enumerate().take(b).skip(a) {
            let inner = if t > a { row[t - a - 1] } else { 0.0 };
            pair_sum += 1.0 + 2.0 * inner;
        }
        finish_cost(b - a, pair_sum)
    };

    let values = (half..=n - half)
        .map(|i| seg(i - half, i + half) - seg(i - half, i) - seg(i, i + half))
        .collect();
    Ok(Discrepancy {
        start: half,
        values,
    })
}

/// Sliding-window detection. A peak is a point whose discrepancy is positive,
/// strictly above every point up to `h` before it and at least every point up
/// to `h` after it (so plateaus resolve to their leftmost point).
pub fn window_detect(cost: &KernelCost, window: usize, rule: SelectionRule) -> Result<Changepoints> {
    let curve = discrepancy_curve(cost, window)?;
    let half = window / 2;
    let d = &curve.values;

    let mut peaks: Vec<usize> = (0..d.len())
        .filter(|&k| {
            let v = d[k];
            v > 0.0
                && d[k.saturating_sub(half)..k].iter().all(|&u| v > u)
                && d[k + 1..(k + half + 1).min(d.len())].iter().all(|&u| v >= u)
        })
        .collect();

    match rule {
        SelectionRule::PenaltyRatio(ratio) => {
            if !(ratio.is_finite() && ratio >= 0.0) {
                return Err(Error::InvalidParams(format!("invalid penalty ratio {ratio}")));
            }
            let max = d.iter().copied().fold(0.0, f64::max);
            peaks.retain(|&k| d[k] > ratio * max);
        }
        SelectionRule::Count(count) => {
            peaks.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
            peaks.truncate(count);
            peaks.sort_unstable();
        }
    }

    let mut indices: Vec<usize> = peaks.into_iter().map(|k| k + curve.start).collect();
    indices.push(cost.len());
    Ok(Changepoints { indices })
}
