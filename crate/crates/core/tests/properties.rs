// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use symseg::changepoint::{discrepancy_curve, median_heuristic_gamma, pelt, window_detect, KernelCost, PeltParams, SelectionRule};
use symseg::evaluation::{beat_error_histogram, equidistant_baseline, match_boundaries};
use symseg::graph::{adjacency, build_graph, novelty, NoveltySource};
use symseg::norm_method::run_norm;
use symseg::note_model::{encode_midi, parse_midi, parse_note_csv, to_note_csv, NoteCsvOptions};
use symseg::pipeline::{run_method, Method, MethodParams};
use symseg::{NormParams, Note, Piece, TimingContext};

fn notes_strategy(max: usize) -> impl Strategy<Value = Vec<Note>> {
    prop::collection::vec((0u64..60, 1u64..8, 30u8..100), 1..max).prop_map(|raw| {
        raw.into_iter()
            .map(|(on, len, pitch)| Note::new(pitch, on * 120, (on + len) * 120))
            .collect()
    })
}

fn piece_strategy(max: usize) -> impl Strategy<Value = Piece> {
    notes_strategy(max).prop_map(|n| Piece::new(n, TimingContext::default(), "p.mid").unwrap())
}

fn signal_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-5.0f64..5.0), (0u8..4).prop_map(f64::from)], 1..max)
}

fn sorted_points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..200.0, 0..25).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn graph_matches_pairwise_definition(piece in piece_strategy(80)) {
        let got: BTreeSet<_> = build_graph(&piece).edges().iter().map(|e| (e.i, e.j, e.kind)).collect();
        prop_assert_eq!(got, common::oracle_edges(&piece));
    }

    #[test]
    fn graph_is_invariant_under_time_shift(piece in piece_strategy(60), delta in 1u64..100_000) {
        prop_assert_eq!(build_graph(&piece), build_graph(&common::shifted(&piece, delta)));
    }

    #[test]
    fn adjacency_is_symmetric_binary_with_zero_diagonal(piece in piece_strategy(60)) {
        let m = adjacency(&build_graph(&piece)).unwrap();
        for i in 0..m.dim() {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..m.dim() {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                prop_assert!(m.get(i, j) == 0.0 || m.get(i, j) == 1.0);
            }
        }
    }

    #[test]
    fn novelty_has_one_value_per_transition(piece in piece_strategy(60)) {
        prop_assume!(piece.len() >= 2);
        let m = adjacency(&build_graph(&piece)).unwrap();
        let c = novelty(&m, NoveltySource::AdjacencyMatrix).unwrap();
        prop_assert_eq!(c.values.len(), piece.len() - 1);
        prop_assert!(c.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn segment_cost_agrees_with_double_sum(y in signal_strategy(40)) {
        let gamma = median_heuristic_gamma(&y);
        let cost = KernelCost::new(y.clone(), gamma).unwrap();
        let lazy = KernelCost::lazy(y.clone(), gamma).unwrap();
        for a in 0..y.len() {
            for b in a + 1..=y.len() {
                let c = cost.segment_cost(a, b).unwrap();
                prop_assert!(c >= 0.0);
                prop_assert_eq!(c.to_bits(), lazy.segment_cost(a, b).unwrap().to_bits());
                prop_assert!((c - common::naive_cost(&y, gamma, a, b)).abs() <= 1e-9 * (b - a) as f64);
            }
        }
    }

    #[test]
    fn median_gamma_matches_sorted_pairs(y in signal_strategy(30)) {
        let mut sq: Vec<f64> = Vec::new();
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                sq.push((y[i] - y[j]) * (y[i] - y[j]));
            }
        }
        sq.sort_by(f64::total_cmp);
        let median = match sq.len() {
            0 => 0.0,
            n if n % 2 == 1 => sq[n / 2],
            n => (sq[n / 2 - 1] + sq[n / 2]) / 2.0,
        };
        let want = if median > 0.0 && (1.0 / median).is_finite() { 1.0 / median } else { 1.0 };
        prop_assert_eq!(median_heuristic_gamma(&y), want);
    }

    #[test]
    fn pelt_output_is_admissible_and_optimal(
        y in signal_strategy(60),
        min_size in 1usize..5,
        jump in 1usize..4,
        penalty in 0.0f64..4.0,
    ) {
        let cost = KernelCost::with_median_gamma(y.clone()).unwrap();
        let got = pelt(&cost, &PeltParams::new(min_size, jump, penalty).unwrap()).unwrap();
        prop_assert!(got.is_valid(y.len(), min_size, jump));
        let oracle = common::optimal_partition(&y, cost.gamma(), min_size, jump, penalty);
        let total = |cps: &[usize]| {
            let mut prev = 0;
            cps.iter().map(|&c| { let v = cost.segment_cost(prev, c).unwrap() + penalty; prev = c; v }).sum::<f64>()
        };
        prop_assert!((total(got.indices()) - total(&oracle)).abs() <= 1e-9 * (1.0 + total(&oracle)));
    }

    #[test]
    fn pelt_boundary_count_is_monotone_in_penalty(y in signal_strategy(60), min_size in 1usize..4) {
        let cost = KernelCost::with_median_gamma(y).unwrap();
        let mut last = usize::MAX;
        for p in [0.0, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let k = pelt(&cost, &PeltParams::new(min_size, 1, p).unwrap()).unwrap().indices().len();
            prop_assert!(k <= last);
            last = k;
        }
    }

    #[test]
    fn window_discrepancy_is_nonnegative_and_peaks_valid(y in signal_strategy(60), half in 1usize..6) {
        let window = 2 * half;
        prop_assume!(window < y.len());
        let cost = KernelCost::with_median_gamma(y.clone()).unwrap();
        let d = discrepancy_curve(&cost, window).unwrap();
        prop_assert!(d.values.iter().all(|v| *v >= -1e-9));
        let cps = window_detect(&cost, window, SelectionRule::PenaltyRatio(0.5)).unwrap();
        prop_assert_eq!(*cps.indices().last().unwrap(), y.len());
        prop_assert!(cps.indices().windows(2).all(|w| w[0] < w[1]));
        for &i in cps.interior() {
            prop_assert!(i >= half && i + half <= y.len());
        }
    }

    #[test]
    fn greedy_matching_is_maximum(r in sorted_points(), e in sorted_points(), tol in 0.01f64..20.0) {
        let m = match_boundaries(&r, &e, tol).unwrap();
        prop_assert_eq!(m.matched, common::kuhn_matching(&r, &e, tol));
        for &(i, j) in &m.pairs {
            prop_assert!((r[i] - e[j]).abs() <= tol);
        }
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(r in sorted_points(), e in sorted_points(), tol in 0.01f64..20.0) {
        let a = match_boundaries(&r, &e, tol).unwrap();
        let b = match_boundaries(&e, &r, tol).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!(a.f1 <= 2.0 * a.precision.min(a.recall) + 1e-15);
        prop_assert_eq!(a.f1 == 0.0, a.matched == 0);
    }

    #[test]
    fn larger_tolerance_never_loses_matches(r in sorted_points(), e in sorted_points(), t1 in 0.01f64..10.0, extra in 0.0f64..10.0) {
        let small = match_boundaries(&r, &e, t1).unwrap().matched;
        let large = match_boundaries(&r, &e, t1 + extra).unwrap().matched;
        prop_assert!(small <= large);
    }

    #[test]
    fn baseline_depends_only_on_duration(duration in 0.5f64..1000.0, k in 1usize..60) {
        let b = equidistant_baseline(duration, k).unwrap();
        prop_assert_eq!(b.len(), k);
        prop_assert_eq!(*b.last().unwrap(), duration);
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn histogram_counts_every_estimate(r in sorted_points(), e in sorted_points()) {
        prop_assume!(!r.is_empty());
        prop_assert_eq!(beat_error_histogram(&r, &e, 10.0).unwrap().total(), e.len());
    }

    #[test]
    fn note_csv_round_trips(piece in piece_strategy(60), tpq in prop::sample::select(vec![96u32, 120, 480, 960])) {
        let rescaled = Piece::new(piece.notes().to_vec(), TimingContext::with_ticks_per_quarter(tpq), "").unwrap();
        let options = NoteCsvOptions { timing: *rescaled.timing(), ..NoteCsvOptions::default() };
        let back = parse_note_csv(&to_note_csv(&rescaled), &options).unwrap();
        prop_assert_eq!(back.notes(), rescaled.notes());
    }

    #[test]
    fn midi_round_trips(notes in notes_strategy(60)) {
        // One note per pitch keeps note-on/note-off pairing unambiguous.
        let mut seen = BTreeSet::new();
        let notes: Vec<Note> = notes.into_iter().filter(|n| seen.insert(n.pitch)).collect();
        let piece = Piece::new(notes, TimingContext::default(), "").unwrap();
        let back = parse_midi(&encode_midi(&piece)).unwrap();
        prop_assert_eq!(back.notes(), piece.notes());
    }

    #[test]
    fn norm_is_transposition_invariant(piece in piece_strategy(80), shift in -20i16..=20) {
        prop_assume!(piece.len() >= 4);
        let a = run_norm(&piece, &NormParams::default()).unwrap();
        let b = run_norm(&common::transposed(&piece, shift), &NormParams::default()).unwrap();
        prop_assert_eq!(&a.candidates, &b.candidates);
        prop_assert_eq!(&a.boundaries, &b.boundaries);
        prop_assert!(a.boundaries.iter().all(|x| a.candidates.contains(x)));
    }

    #[test]
    fn segmentations_are_ordered_and_end_at_the_piece_end(
        piece in piece_strategy(80),
        method in prop::sample::select(vec![Method::Norm, Method::GPelt, Method::GWindow, Method::Equidistant]),
    ) {
        prop_assume!(piece.len() >= 4);
        let seg = match run_method(&piece, &MethodParams::swd(method)) {
            Ok(s) => s,
            Err(symseg::Error::WindowTooLarge { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let last = seg.boundaries.last().unwrap();
        prop_assert_eq!(last.note_index, piece.len());
        prop_assert_eq!(last.beat, piece.duration_beats());
        prop_assert!(seg.boundaries.windows(2).all(|w| w[0].beat <= w[1].beat));
    }
}
