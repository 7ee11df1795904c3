//! Decoding of per-timestep probabilities into single-line separators.
//!
//! Each timestep is labeled by argmax, consecutive equal labels are grouped
//! into runs, and every whitespace run that does not touch either end of the
//! sequence yields one separator at its (floor) midpoint. Whitespace runs
//! touching the ends are table margins, not separators.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::ProbSeq;
use crate::train::LabelSeq;
use crate::types::{Axis, Label};

/// Header line of a separator file.
pub const SEPARATOR_HEADER: &str = "axis,position_resized,position_original";

/// A maximal run of equal labels, `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl Run {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Runs covering `0..T` contiguously, alternating in label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunList {
    pub runs: Vec<Run>,
}

impl RunList {
    /// Expands the runs back into one label per timestep.
    pub fn to_labels(&self) -> LabelSeq {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.label, r.len()))
            .collect()
    }

    pub fn whitespace_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.label == Label::Whitespace).count()
    }
}

/// Separator positions for one axis, both in the resized raster and in the
/// original image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparatorSet {
    pub axis: Axis,
    /// Strictly increasing indices in the resized raster.
    pub positions: Vec<usize>,
    /// Strictly increasing pixel coordinates in the source image.
    pub positions_original: Vec<usize>,
}

impl SeparatorSet {
    /// A set whose resized and original coordinates coincide.
    pub fn identity(axis: Axis, positions: Vec<usize>) -> Self {
        SeparatorSet {
            axis,
            positions_original: positions.clone(),
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_original.is_empty()
    }

    /// `(resized, original)` pairs, one per distinct original position,
    /// pairing it with the first resized position that maps onto it.
    pub fn pairs(&self, resized_extent: usize, original_extent: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &p in &self.positions {
            let o = scale_position(p, resized_extent, original_extent);
            if out.last().is_none_or(|&(_, last)| last != o) {
                out.push((p, o));
            }
        }
        out
    }
}

/// Separator file contents: the header, then one
/// `axis,position_resized,position_original` line per separator.
pub fn separator_file(s: &SeparatorSet, resized_extent: usize, original_extent: usize) -> String {
    let mut out = format!("{SEPARATOR_HEADER}\n");
    for (r, o) in s.pairs(resized_extent, original_extent) {
        out.push_str(&format!("{},{r},{o}\n", s.axis));
    }
    out
}

pub fn write_separator_file(
    path: &Path,
    s: &SeparatorSet,
    resized_extent: usize,
    original_extent: usize,
) -> Result<()> {
    fsutil::write_atomic(path, separator_file(s, resized_extent, original_extent).as_bytes())
}

/// Parses a separator file for `axis`. A zero-byte file means "no
/// detections at all" and yields `None`; a header with no lines is a
/// detection of zero separators.
pub fn parse_separator_file(text: &str, axis: Axis, path: &Path) -> Result<Option<SeparatorSet>> {
    if text.is_empty() {
        return Ok(None);
    }
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SEPARATOR_HEADER) {
        return Err(bad(format!("expected header `{SEPARATOR_HEADER}`")));
    }
    let mut positions = Vec::new();
    let mut positions_original = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [a, r, o] = fields[..] else {
            return Err(bad(format!("line {}: expected three fields", n + 2)));
        };
        let line_axis: Axis = a.parse().map_err(|e: Error| bad(format!("line {}: {e}", n + 2)))?;
        if line_axis != axis {
            return Err(bad(format!("line {}: {line_axis} separator in a {axis} file", n + 2)));
        }
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("line {}: bad position `{v}`", n + 2)))
        };
        positions.push(num(r)?);
        positions_original.push(num(o)?);
    }
    if positions_original.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("original positions are not strictly increasing".into()));
    }
    Ok(Some(SeparatorSet {
        axis,
        positions,
        positions_original,
    }))
}

pub fn read_separator_file(path: &Path, axis: Axis) -> Result<Option<SeparatorSet>> {
    parse_separator_file(&fsutil::read_to_string(path)?, axis, path)
}

/// Argmax decode; a tie (exactly 0.5) goes to whitespace.
pub fn probs_to_labels(p: &ProbSeq) -> LabelSeq {
    p.rows()
        .iter()
        .map(|r| {
            if r[1] >= 0.5 {
                Label::Whitespace
            } else {
                Label::Content
            }
        })
        .collect()
}

pub fn labels_to_runs(l: &LabelSeq) -> RunList {
    let mut runs: Vec<Run> = Vec::new();
    for (t, &label) in l.labels().iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.label == label => r.end = t,
            _ => runs.push(Run {
                start: t,
                end: t,
                label,
            }),
        }
    }
    RunList { runs }
}

/// Midpoints of interior whitespace runs of a length-`timesteps` sequence.
pub fn runs_to_separators(r: &RunList, timesteps: usize, axis: Axis) -> SeparatorSet {
    let positions = r
        .runs
        .iter()
        .filter(|run| run.label == Label::Whitespace)
        .filter(|run| run.start > 0 && run.end + 1 < timesteps)
        .map(|run| (run.start + run.end) / 2)
        .collect();
    SeparatorSet::identity(axis, positions)
}

fn scale_position(p: usize, resized_extent: usize, original_extent: usize) -> usize {
    let scaled = (p as f64 * original_extent as f64 / resized_extent as f64).round() as usize;
    scaled.min(original_extent - 1)
}

/// Maps resized positions into an `original_extent`-long axis, rounding to
/// the nearest pixel and collapsing positions that round together.
pub fn rescale_separators(
    s: &SeparatorSet,
    resized_extent: usize,
    original_extent: usize,
) -> SeparatorSet {
    assert!(resized_extent > 0 && original_extent > 0, "extents must be positive");
    let mut positions_original: Vec<usize> = s
        .positions
        .iter()
        .map(|&p| scale_position(p, resized_extent, original_extent))
        .collect();
    positions_original.dedup();
    SeparatorSet {
        axis: s.axis,
        positions: s.positions.clone(),
        positions_original,
    }
}

/// Full decode: argmax, runs, interior midpoints, rescale to the source.
pub fn decode(p: &ProbSeq, axis: Axis, original_extent: usize) -> SeparatorSet {
    let runs = labels_to_runs(&probs_to_labels(p));
    let resized = runs_to_separators(&runs, p.len(), axis);
    rescale_separators(&resized, p.len(), original_extent)
}
