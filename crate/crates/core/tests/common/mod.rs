//! Brute-force six-measure oracle shared by the metric tests and the
//! acceptance suite. It works directly on masks with exact integer ratio
//! comparisons.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tabseq::eval::{EvalReport, SegmentMask};

/// Pixel count of `G_i ∩ S_j` by scanning the masks.
pub fn overlap(gt: &SegmentMask, det: &SegmentMask, i: u32, j: u32) -> u64 {
    gt.ids
        .iter()
        .zip(&det.ids)
        .filter(|(&g, &d)| g == i && d == j)
        .count() as u64
}

pub fn size(mask: &SegmentMask, id: u32) -> u64 {
    mask.ids.iter().filter(|&&v| v == id).count() as u64
}

// Ratio predicates on exact integers; a zero denominator is ratio 0.
fn large(num: u64, den: u64) -> bool {
    den > 0 && 10 * num > 9 * den
}
fn small(num: u64, den: u64) -> bool {
    den == 0 || 10 * num < den
}
fn middling(num: u64, den: u64) -> bool {
    den > 0 && 10 * num > den && 10 * num < 9 * den
}

pub fn oracle(gt: &SegmentMask, det: &SegmentMask) -> EvalReport {
    let (m, n) = (gt.count as u32, det.count as u32);
    let g: Vec<u64> = (1..=m).map(|i| size(gt, i)).collect();
    let s: Vec<u64> = (1..=n).map(|j| size(det, j)).collect();
    let ov = |i: u32, j: u32| overlap(gt, det, i, j);
    let mut r = EvalReport {
        m: m as usize,
        n: n as usize,
        degenerate: m == 0 || n == 0,
        ..EvalReport::default()
    };
    for i in 1..=m {
        let gi = g[i as usize - 1];
        let correct = (1..=n).any(|j| {
            large(ov(i, j), gi) && (1..=m).filter(|&k| k != i).all(|k| small(ov(k, j), s[j as usize - 1]))
        });
        let partial = (1..=n).any(|j| {
            middling(ov(i, j), gi) && (1..=n).filter(|&k| k != j).all(|k| small(ov(i, k), gi))
        });
        let over = (1..=n).filter(|&j| middling(ov(i, j), gi)).count() > 1;
        let missed = (1..=n).all(|j| small(ov(i, j), gi));
        r.correct += correct as usize;
        r.partial += partial as usize;
        r.over_segmented += over as usize;
        r.missed += missed as usize;
    }
    for j in 1..=n {
        let sj = s[j as usize - 1];
        r.under_segmented += ((1..=m).filter(|&i| middling(ov(i, j), sj)).count() > 1) as usize;
        r.false_positive += (1..=m).all(|i| small(ov(i, j), sj)) as usize;
    }
    r
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, max_ids: usize) -> SegmentMask {
    let count = rng.random_range(0..=max_ids);
    // Mostly blocky masks (so large overlaps happen) with some noise.
    let ids = (0..w * h)
        .map(|p| {
            if count == 0 {
                return 0;
            }
            if rng.random_bool(0.2) {
                rng.random_range(0..=count as u32)
            } else {
                ((p % w) * (count + 1) / w) as u32
            }
        })
        .collect();
    SegmentMask::new(w, h, ids, count).unwrap()
}
