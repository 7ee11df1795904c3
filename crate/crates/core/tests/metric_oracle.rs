//! The six-measure classification checked against a brute-force oracle.

mod common;

use common::{oracle, overlap, random_mask, size};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabseq::eval::{classify, correspondence, spans_to_mask, CorrespondenceMatrix};
use tabseq::synth::{generate_corpus, SynthSpec};
use tabseq::preprocess::{evaluation_foreground, PreprocessConfig};
use tabseq::Axis;

#[test]
fn classify_matches_brute_force_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let gt = random_mask(&mut rng, w, h, 4);
        let det = random_mask(&mut rng, w, h, 4);
        let got = classify(&correspondence(&gt, &det).unwrap());
        if got != oracle(&gt, &det) {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn correspondence_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let gt = random_mask(&mut rng, 12, 12, 3);
        let det = random_mask(&mut rng, 12, 12, 3);
        let c = correspondence(&gt, &det).unwrap();
        for i in 0..c.m {
            assert_eq!(c.gt_total[i], size(&gt, i as u32 + 1));
            for j in 0..c.n {
                assert_eq!(c.at(i, j), overlap(&gt, &det, i as u32 + 1, j as u32 + 1));
            }
        }
        for j in 0..c.n {
            assert_eq!(c.det_total[j], size(&det, j as u32 + 1));
        }
    }
}

fn matrix_strategy() -> impl Strategy<Value = CorrespondenceMatrix> {
    (0usize..5, 0usize..5).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(0u64..50, m * n),
            prop::collection::vec(0u64..60, m),
            prop::collection::vec(0u64..60, n),
        )
            .prop_map(move |(overlap, gslack, sslack)| {
                let gt: Vec<u64> = (0..m)
                    .map(|i| (0..n).map(|j| overlap[i * n + j]).sum::<u64>() + gslack[i])
                    .collect();
                let det: Vec<u64> = (0..n)
                    .map(|j| (0..m).map(|i| overlap[i * n + j]).sum::<u64>() + sslack[j])
                    .collect();
                CorrespondenceMatrix::new(overlap, gt, det).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn counts_and_percentages_are_bounded(c in matrix_strategy()) {
        let r = classify(&c);
        prop_assert!(r.correct + r.partial + r.missed <= r.m);
        prop_assert!(r.under_segmented + r.false_positive <= r.n);
        for measure in tabseq::eval::Measure::ALL {
            let p = r.percent(measure);
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }

    #[test]
    fn per_segment_categories_are_exclusive(c in matrix_strategy()) {
        // Keep one ground-truth row; the zeroed rows all count as missed.
        for i in 0..c.m {
            let keep = |k: usize| k == i;
            let overlap = (0..c.m)
                .flat_map(|k| (0..c.n).map(move |j| (k, j)))
                .map(|(k, j)| if keep(k) { c.at(k, j) } else { 0 })
                .collect::<Vec<_>>();
            let gt = (0..c.m).map(|k| if keep(k) { c.gt_total[k] } else { 0 }).collect();
            let row = CorrespondenceMatrix::new(overlap, gt, c.det_total.clone()).unwrap();
            let r = classify(&row);
            // the kept row is at most one of correct / partial / missed
            let zero_rows = c.m - 1;
            prop_assert!(r.correct + r.partial + (r.missed - zero_rows) <= 1);
        }
    }

    #[test]
    fn scale_invariant(c in matrix_strategy(), k in 1u64..50) {
        prop_assert_eq!(classify(&c), classify(&c.scaled(k)));
    }
}

#[test]
fn synthetic_ground_truth_evaluates_perfectly() {
    let spec = SynthSpec::default();
    let pre = PreprocessConfig::default();
    for s in generate_corpus(50, &spec, 300).unwrap() {
        let fg = evaluation_foreground(&s.image, &pre).unwrap();
        for axis in Axis::BOTH {
            let gt = s.gt(axis);
            let mask = spans_to_mask(&gt.content_spans, axis, &fg).unwrap();
            let r = classify(&correspondence(&mask, &mask).unwrap());
            assert_eq!((r.correct, r.m), (gt.content_spans.len(), gt.content_spans.len()));
            assert_eq!(r.partial + r.over_segmented + r.under_segmented + r.missed + r.false_positive, 0);
        }
    }
}

#[test]
fn mask_matches_per_pixel_membership() {
    let spec = SynthSpec::default();
    let pre = PreprocessConfig::default();
    for s in generate_corpus(5, &spec, 77).unwrap() {
        let fg = evaluation_foreground(&s.image, &pre).unwrap();
        for axis in Axis::BOTH {
            let spans = &s.gt(axis).content_spans;
            let mask = spans_to_mask(spans, axis, &fg).unwrap();
            for y in 0..fg.height() {
                for x in 0..fg.width() {
                    let coord = if axis == Axis::Column { x } else { y };
                    let want = match spans.iter().position(|&(a, b)| a <= coord && coord <= b) {
                        Some(k) if fg.get(x, y) => k as u32 + 1,
                        _ => 0,
                    };
                    assert_eq!(mask.get(x, y), want);
                }
            }
        }
    }
}
