//! Correspondence-matrix evaluation of a row or column segmentation.
//!
//! Ground-truth and detected segments are strips across the image (one per
//! row or column span) restricted to foreground pixels. Their pixel overlaps
//! form an `m x n` matrix, and each ground-truth or detected segment is
//! classified with fixed 0.9 / 0.1 overlap-ratio thresholds into six
//! measures: correct, partial, over-segmented, under-segmented, missed and
//! false positive.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fsutil;
use crate::postprocess::SeparatorSet;
use crate::preprocess::BinaryImage;
use crate::types::Axis;

/// Ratio above which an overlap is "large".
pub const LARGE: f64 = 0.9;
/// Ratio below which an overlap is "negligible".
pub const SMALL: f64 = 0.1;

/// Inclusive pixel interval along one axis.
pub type Span = (usize, usize);

/// Ground-truth rows or columns of one table image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtStructure {
    pub axis: Axis,
    /// Length of the image along `axis`, in original pixels.
    pub extent: usize,
    pub content_spans: Vec<Span>,
}

impl GtStructure {
    pub fn new(axis: Axis, extent: usize, content_spans: Vec<Span>) -> Result<Self> {
        let gt = GtStructure {
            axis,
            extent,
            content_spans,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent == 0 {
            return Err(invalid(format!("{} ground truth has zero extent", self.axis)));
        }
        check_spans(&self.content_spans, self.extent)
    }

    /// One separator per gap between consecutive spans, at the gap's
    /// (floor) midpoint.
    pub fn separators(&self) -> SeparatorSet {
        let positions = self
            .content_spans
            .windows(2)
            .map(|w| (w[0].1 + 1 + w[1].0 - 1) / 2)
            .collect();
        SeparatorSet::identity(self.axis, positions)
    }
}

fn check_spans(spans: &[Span], extent: usize) -> Result<()> {
    for (k, &(a, b)) in spans.iter().enumerate() {
        if a > b {
            return Err(invalid(format!("span {k} ({a}, {b}) has start after end")));
        }
        if b >= extent {
            return Err(invalid(format!("span {k} ({a}, {b}) exceeds extent {extent}")));
        }
        if k > 0 && spans[k - 1].1 >= a {
            return Err(invalid(format!("span {k} ({a}, {b}) overlaps or precedes span {}", k - 1)));
        }
    }
    Ok(())
}

/// Ground truth for both axes of one image, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtFile {
    pub rows: GtStructure,
    pub columns: GtStructure,
}

impl GtFile {
    pub fn axis(&self, axis: Axis) -> &GtStructure {
        match axis {
            Axis::Row => &self.rows,
            Axis::Column => &self.columns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.axis != Axis::Row || self.columns.axis != Axis::Column {
            return Err(invalid("ground-truth `rows`/`columns` entries carry the wrong axis"));
        }
        self.rows.validate()?;
        self.columns.validate()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let gt: GtFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        gt.validate().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Ok(gt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fsutil::read_to_string(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_json().as_bytes())
    }
}

/// Per-pixel segment ids, 0 meaning "no segment".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMask {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub count: usize,
}

impl SegmentMask {
    pub fn new(width: usize, height: usize, ids: Vec<u32>, count: usize) -> Result<Self> {
        if ids.len() != width * height {
            return Err(invalid(format!(
                "mask holds {} ids for {width}x{height}",
                ids.len()
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize > count) {
            return Err(invalid(format!("mask id {id} exceeds segment count {count}")));
        }
        Ok(SegmentMask {
            width,
            height,
            ids,
            count,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    /// Foreground pixels per segment (index `k` holds segment `k + 1`).
    pub fn sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.count];
        for &id in &self.ids {
            if id > 0 {
                sizes[id as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// Labels every foreground pixel lying in the `k`-th span strip with `k + 1`.
pub fn spans_to_mask(spans: &[Span], axis: Axis, fg: &BinaryImage) -> Result<SegmentMask> {
    let (w, h) = (fg.width(), fg.height());
    let extent = match axis {
        Axis::Column => w,
        Axis::Row => h,
    };
    check_spans(spans, extent)?;
    // Strip id per coordinate along the axis.
    let mut strip = vec![0u32; extent];
    for (k, &(a, b)) in spans.iter().enumerate() {
        strip[a..=b].fill(k as u32 + 1);
    }
    let fg_data = fg.data();
    let mut ids = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if fg_data[i] == 1 {
                ids[i] = match axis {
                    Axis::Column => strip[x],
                    Axis::Row => strip[y],
                };
            }
        }
    }
    Ok(SegmentMask {
        width: w,
        height: h,
        ids,
        count: spans.len(),
    })
}

/// Regions strictly between consecutive separators (and the image ends).
/// Separator pixels belong to no region; empty regions are dropped.
pub fn separators_to_spans(s: &[usize], extent: usize) -> Vec<Span> {
    let mut spans = Vec::with_capacity(s.len() + 1);
    let mut start = 0usize;
    for &p in s {
        if p >= extent {
            break;
        }
        if p > start {
            spans.push((start, p - 1));
        }
        start = p + 1;
    }
    if start < extent {
        spans.push((start, extent - 1));
    }
    spans
}

/// Pixel overlaps between ground-truth segments (rows) and detections
/// (columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMatrix {
    pub m: usize,
    pub n: usize,
    /// Row-major `m x n`.
    pub overlap: Vec<u64>,
    pub gt_total: Vec<u64>,
    pub det_total: Vec<u64>,
}

impl CorrespondenceMatrix {
    pub fn new(overlap: Vec<u64>, gt_total: Vec<u64>, det_total: Vec<u64>) -> Result<Self> {
        let (m, n) = (gt_total.len(), det_total.len());
        if overlap.len() != m * n {
            return Err(invalid(format!("overlap has {} entries for {m}x{n}", overlap.len())));
        }
        let c = CorrespondenceMatrix {
            m,
            n,
            overlap,
            gt_total,
            det_total,
        };
        for i in 0..m {
            let row: u64 = (0..n).map(|j| c.at(i, j)).sum();
            if row > c.gt_total[i] {
                return Err(invalid(format!("overlaps of G{} exceed its size", i + 1)));
            }
        }
        for j in 0..n {
            let col: u64 = (0..m).map(|i| c.at(i, j)).sum();
            if col > c.det_total[j] {
                return Err(invalid(format!("overlaps of S{} exceed its size", j + 1)));
            }
        }
        Ok(c)
    }

    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.overlap[i * self.n + j]
    }

    /// Fraction of `G_i` covered by `S_j`.
    pub fn gt_ratio(&self, i: usize, j: usize) -> f64 {
        ratio(self.at(i, j), self.gt_total[i])
    }

    /// Fraction of `S_j` covered by `G_i`.
    pub fn det_ratio(&self, i: usize, j: usize) -> f64 {
        ratio(self.at(i, j), self.det_total[j])
    }

    /// Multiplies every count by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        let s = |v: &Vec<u64>| v.iter().map(|x| x * k).collect();
        CorrespondenceMatrix {
            m: self.m,
            n: self.n,
            overlap: s(&self.overlap),
            gt_total: s(&self.gt_total),
            det_total: s(&self.det_total),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mid(r: f64) -> bool {
    SMALL < r && r < LARGE
}

pub fn correspondence(gt: &SegmentMask, det: &SegmentMask) -> Result<CorrespondenceMatrix> {
    if gt.width != det.width || gt.height != det.height {
        return Err(invalid(format!(
            "mask dims differ: ground truth {}x{}, detection {}x{}",
            gt.width, gt.height, det.width, det.height
        )));
    }
    let (m, n) = (gt.count, det.count);
    let mut overlap = vec![0u64; m * n];
    for (&g, &d) in gt.ids.iter().zip(&det.ids) {
        if g > 0 && d > 0 {
            overlap[(g as usize - 1) * n + d as usize - 1] += 1;
        }
    }
    Ok(CorrespondenceMatrix {
        m,
        n,
        overlap,
        gt_total: gt.sizes(),
        det_total: det.sizes(),
    })
}

/// The six measures, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Correct,
    Partial,
    OverSegmented,
    UnderSegmented,
    Missed,
    FalsePositive,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Correct,
        Measure::Partial,
        Measure::OverSegmented,
        Measure::UnderSegmented,
        Measure::Missed,
        Measure::FalsePositive,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Measure::Correct => "correct",
            Measure::Partial => "partial",
            Measure::OverSegmented => "over_segmented",
            Measure::UnderSegmented => "under_segmented",
            Measure::Missed => "missed",
            Measure::FalsePositive => "false_positive",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Measure::Correct => "Correct detections",
            Measure::Partial => "Partial detections",
            Measure::OverSegmented => "Over-segmented",
            Measure::UnderSegmented => "Under-segmented",
            Measure::Missed => "Missed",
            Measure::FalsePositive => "False positive detections",
        }
    }

    /// Whether the measure counts detected segments (denominator `n`)
    /// rather than ground-truth segments (denominator `m`).
    pub fn over_detections(self) -> bool {
        matches!(self, Measure::UnderSegmented | Measure::FalsePositive)
    }
}

/// Six-measure counts with their denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub correct: usize,
    pub partial: usize,
    pub over_segmented: usize,
    pub under_segmented: usize,
    pub missed: usize,
    pub false_positive: usize,
    /// Ground-truth segments.
    pub m: usize,
    /// Detected segments.
    pub n: usize,
    /// Set when `m` or `n` was zero for at least one contributing image.
    pub degenerate: bool,
}

impl EvalReport {
    pub fn count(&self, measure: Measure) -> usize {
        match measure {
            Measure::Correct => self.correct,
            Measure::Partial => self.partial,
            Measure::OverSegmented => self.over_segmented,
            Measure::UnderSegmented => self.under_segmented,
            Measure::Missed => self.missed,
            Measure::FalsePositive => self.false_positive,
        }
    }

    pub fn percent(&self, measure: Measure) -> f64 {
        let den = if measure.over_detections() { self.n } else { self.m };
        if den == 0 {
            0.0
        } else {
            100.0 * self.count(measure) as f64 / den as f64
        }
    }

    /// Sums counts and denominators; percentages are then recomputed from
    /// the totals.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        EvalReport {
            correct: self.correct + other.correct,
            partial: self.partial + other.partial,
            over_segmented: self.over_segmented + other.over_segmented,
            under_segmented: self.under_segmented + other.under_segmented,
            missed: self.missed + other.missed,
            false_positive: self.false_positive + other.false_positive,
            m: self.m + other.m,
            n: self.n + other.n,
            degenerate: self.degenerate || other.degenerate,
        }
    }

    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> EvalReport {
        reports
            .into_iter()
            .fold(EvalReport::default(), |acc, r| acc.merge(r))
    }

    /// Aligned plain-text table.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<28}{:>8}{:>10}", "Measure", "Count", "Percent");
        for measure in Measure::ALL {
            let _ = writeln!(
                s,
                "{:<28}{:>8}{:>9.2}%",
                measure.title(),
                self.count(measure),
                self.percent(measure)
            );
        }
        let _ = writeln!(s, "ground-truth segments m = {}, detected segments n = {}", self.m, self.n);
        s
    }

    /// `measure,count,percent` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("measure,count,percent\n");
        for measure in Measure::ALL {
            let _ = writeln!(s, "{},{},{:.4}", measure.key(), self.count(measure), self.percent(measure));
        }
        s
    }
}

pub fn classify(c: &CorrespondenceMatrix) -> EvalReport {
    let (m, n) = (c.m, c.n);
    let mut r = EvalReport {
        m,
        n,
        degenerate: m == 0 || n == 0,
        ..EvalReport::default()
    };
    for i in 0..m {
        let correct = (0..n).any(|j| {
            c.gt_ratio(i, j) > LARGE && (0..m).all(|k| k == i || c.det_ratio(k, j) < SMALL)
        });
        let partial = (0..n).any(|j| {
            mid(c.gt_ratio(i, j)) && (0..n).all(|k| k == j || c.gt_ratio(i, k) < SMALL)
        });
        let over = (0..n).filter(|&j| mid(c.gt_ratio(i, j))).count() > 1;
        let missed = (0..n).all(|j| c.gt_ratio(i, j) < SMALL);
        r.correct += correct as usize;
        r.partial += partial as usize;
        r.over_segmented += over as usize;
        r.missed += missed as usize;
    }
    for j in 0..n {
        let under = (0..m).filter(|&i| mid(c.det_ratio(i, j))).count() > 1;
        let fp = (0..m).all(|i| c.det_ratio(i, j) < SMALL);
        r.under_segmented += under as usize;
        r.false_positive += fp as usize;
    }
    r
}

/// Scores detected spans against ground truth over the foreground `fg`.
pub fn evaluate_spans(det: &[Span], gt: &GtStructure, fg: &BinaryImage) -> Result<EvalReport> {
    let gt_mask = spans_to_mask(&gt.content_spans, gt.axis, fg)?;
    let det_mask = spans_to_mask(det, gt.axis, fg)?;
    Ok(classify(&correspondence(&gt_mask, &det_mask)?))
}

/// Scores separators in original coordinates against ground truth.
pub fn evaluate_separators(det: &SeparatorSet, gt: &GtStructure, fg: &BinaryImage) -> Result<EvalReport> {
    if det.axis != gt.axis {
        return Err(invalid(format!(
            "detections are for the {} axis, ground truth for the {} axis",
            det.axis, gt.axis
        )));
    }
    evaluate_spans(&separators_to_spans(&det.positions_original, gt.extent), gt, fg)
}

/// Greedy one-to-one separator matching within `tolerance` pixels, closest
/// pairs first. Returns `(precision, recall, f1)`; two empty sets score
/// perfectly, and an undefined ratio otherwise counts as 0.
pub fn separator_prf(det: &SeparatorSet, gt: &SeparatorSet, tolerance: usize) -> (f64, f64, f64) {
    let (d, g) = (&det.positions_original, &gt.positions_original);
    if d.is_empty() && g.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &a) in d.iter().enumerate() {
        for (j, &b) in g.iter().enumerate() {
            let dist = a.abs_diff(b);
            if dist <= tolerance {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_d = vec![false; d.len()];
    let mut used_g = vec![false; g.len()];
    let mut tp = 0usize;
    for (_, i, j) in pairs {
        if !used_d[i] && !used_g[j] {
            used_d[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    let precision = if d.is_empty() { 0.0 } else { tp as f64 / d.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { tp as f64 / g.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}
