//! Seeded generator of table-like images with exact row and column ground
//! truth.
//!
//! The canvas is partitioned along each axis into content spans separated by
//! whitespace gaps (the outer margins are gaps too). Each filled cell gets
//! one to three dark, left-aligned rectangles standing in for words. Every
//! row and every column is guaranteed at least one filled cell, so each
//! ground-truth span carries ink.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::eval::{GtFile, GtStructure, Span};
use crate::fsutil;
use crate::imageio;
use crate::par;
use crate::preprocess::GrayImage;
use crate::train::LabelSeq;
use crate::types::{Axis, Label};

/// Space between words of one cell, in pixels.
const WORD_SPACE: usize = 2;
/// Words are kept short enough not to look like ruling lines.
const MAX_WORD_ASPECT: usize = 15;
const MAX_WORD_HEIGHT: usize = 14;
const MIN_TALL_WORD: usize = 8;
const BACKGROUND: (u8, u8) = (220, 255);
const INK: (u8, u8) = (0, 70);

/// Inclusive `min..=max` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Range { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub rows: Range,
    pub cols: Range,
    /// Whitespace between spans and at the outer margins.
    pub gap: Range,
    /// Probability that a cell receives words.
    pub fill_density: f64,
    /// Distance between a cell's words and its span boundary.
    pub blob_margin: usize,
    /// Draws a 1-px horizontal line centered in each interior row gap.
    pub ruling_lines: bool,
    /// Salt-and-pepper flip probability.
    pub noise: f64,
}

impl Default for SynthSpec {
    /// The desk-scale corpus: 400x128 tables with 3-6 rows and 3-5 columns.
    fn default() -> Self {
        SynthSpec {
            width: 400,
            height: 128,
            rows: Range::new(3, 6),
            cols: Range::new(3, 5),
            gap: Range::new(6, 12),
            fill_density: 0.85,
            blob_margin: 3,
            ruling_lines: false,
            noise: 0.0,
        }
    }
}

impl SynthSpec {
    fn min_content(&self) -> usize {
        2 * self.blob_margin + 1
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("rows", self.rows), ("cols", self.cols), ("gap", self.gap)] {
            if r.min > r.max {
                return Err(invalid(format!("{name} range is empty ({}..={})", r.min, r.max)));
            }
        }
        if self.rows.min == 0 || self.cols.min == 0 {
            return Err(invalid("rows and cols ranges must start at 1 or more"));
        }
        if self.gap.min < 2 {
            return Err(invalid(format!("min gap must be at least 2 (got {})", self.gap.min)));
        }
        if !(0.0..=1.0).contains(&self.fill_density) {
            return Err(invalid(format!("fill_density {} outside [0, 1]", self.fill_density)));
        }
        if !(0.0..=0.05).contains(&self.noise) {
            return Err(invalid(format!("noise {} outside [0, 0.05]", self.noise)));
        }
        for (dim, extent, count, what) in [
            ("width", self.width, self.cols.min, "columns"),
            ("height", self.height, self.rows.min, "rows"),
        ] {
            let need = (count + 1) * self.gap.min + count * self.min_content();
            if extent < need {
                return Err(invalid(format!(
                    "{dim} {extent} is too small for {count} {what} at gap {} and blob_margin {} (needs at least {need})",
                    self.gap.min, self.blob_margin
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: GrayImage,
    pub gt_rows: GtStructure,
    pub gt_cols: GtStructure,
    pub seed: u64,
}

impl SynthSample {
    pub fn gt(&self, axis: Axis) -> &GtStructure {
        match axis {
            Axis::Row => &self.gt_rows,
            Axis::Column => &self.gt_cols,
        }
    }

    pub fn gt_file(&self) -> GtFile {
        GtFile {
            rows: self.gt_rows.clone(),
            columns: self.gt_cols.clone(),
        }
    }
}

/// Draws a count and gaps, shrinking gaps to the minimum and then the count
/// until the spans fit, and spreads the remaining room over the spans.
fn layout(rng: &mut ChaCha8Rng, extent: usize, count: Range, gap: Range, min_content: usize) -> Vec<Span> {
    let mut k = rng.random_range(count.min..=count.max);
    let mut gaps: Vec<usize> = (0..=k).map(|_| rng.random_range(gap.min..=gap.max)).collect();
    let fits = |k: usize, gaps: &[usize]| gaps.iter().sum::<usize>() + k * min_content <= extent;
    if !fits(k, &gaps) {
        gaps.iter_mut().for_each(|g| *g = gap.min);
        while !fits(k, &gaps) {
            k -= 1;
            gaps.pop();
        }
    }
    let free = extent - gaps.iter().sum::<usize>() - k * min_content;
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.6..1.4)).collect();
    let total: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| min_content + (free as f64 * w / total).floor() as usize)
        .collect();
    let left = extent - gaps.iter().sum::<usize>() - sizes.iter().sum::<usize>();
    // Flooring leaves fewer than `k` pixels; they go to the first spans.
    sizes.iter_mut().take(left).for_each(|s| *s += 1);
    let mut spans = Vec::with_capacity(k);
    let mut pos = 0usize;
    for i in 0..k {
        pos += gaps[i];
        spans.push((pos, pos + sizes[i] - 1));
        pos += sizes[i];
    }
    spans
}

/// Picks the filled cells: Bernoulli per cell, then one forced cell in every
/// empty row and empty column.
fn fill_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Vec<bool> {
    let mut filled: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(density)).collect();
    for r in 0..rows {
        if !(0..cols).any(|c| filled[r * cols + c]) {
            let c = rng.random_range(0..cols);
            filled[r * cols + c] = true;
        }
    }
    for c in 0..cols {
        if !(0..rows).any(|r| filled[r * cols + c]) {
            let r = rng.random_range(0..rows);
            filled[r * cols + c] = true;
        }
    }
    filled
}

fn fill_rect(img: &mut GrayImage, x0: usize, y0: usize, w: usize, h: usize, v: u8) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            img.set(x, y, v);
        }
    }
}

/// Renders one cell's words inside `(x0, y0, iw, ih)`.
fn draw_words(rng: &mut ChaCha8Rng, img: &mut GrayImage, x0: usize, y0: usize, iw: usize, ih: usize) {
    let wh = if ih <= MAX_WORD_HEIGHT {
        ih
    } else {
        rng.random_range(MIN_TALL_WORD..=MAX_WORD_HEIGHT)
    };
    let wy = y0 + rng.random_range(0..=ih - wh);
    let max_word = (MAX_WORD_ASPECT * wh).max(1);
    let mut n = rng.random_range(1..=3usize);
    while n > 1 && n + (n - 1) * WORD_SPACE > iw {
        n -= 1;
    }
    let room = iw - (n - 1) * WORD_SPACE;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let mut x = x0;
    for (i, w) in weights.iter().enumerate() {
        let share = if i + 1 == n {
            x0 + iw - x
        } else {
            ((room as f64 * w / total).floor() as usize).max(1)
        };
        let width = share.min(max_word);
        let ink = rng.random_range(INK.0..=INK.1);
        fill_rect(img, x, wy, width, wh, ink);
        x += share + WORD_SPACE;
        if x >= x0 + iw {
            break;
        }
    }
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_content = spec.min_content();
    let row_spans = layout(&mut rng, spec.height, spec.rows, spec.gap, min_content);
    let col_spans = layout(&mut rng, spec.width, spec.cols, spec.gap, min_content);
    let filled = fill_mask(&mut rng, row_spans.len(), col_spans.len(), spec.fill_density);

    let bg = rng.random_range(BACKGROUND.0..=BACKGROUND.1);
    let mut image = GrayImage::filled(spec.width, spec.height, bg)?;
    let m = spec.blob_margin;
    for (r, &(ya, yb)) in row_spans.iter().enumerate() {
        for (c, &(xa, xb)) in col_spans.iter().enumerate() {
            if filled[r * col_spans.len() + c] {
                let (iw, ih) = (xb - xa + 1 - 2 * m, yb - ya + 1 - 2 * m);
                draw_words(&mut rng, &mut image, xa + m, ya + m, iw, ih);
            }
        }
    }
    if spec.ruling_lines {
        let ink = rng.random_range(INK.0..=INK.1);
        for w in row_spans.windows(2) {
            let y = (w[0].1 + w[1].0) / 2;
            fill_rect(&mut image, 0, y, spec.width, 1, ink);
        }
    }
    if spec.noise > 0.0 {
        for v in image.data_mut() {
            if rng.random_bool(spec.noise) {
                *v = if *v >= 128 { 0 } else { 255 };
            }
        }
    }
    Ok(SynthSample {
        image,
        gt_rows: GtStructure::new(Axis::Row, spec.height, row_spans)?,
        gt_cols: GtStructure::new(Axis::Column, spec.width, col_spans)?,
        seed,
    })
}

/// `n` samples with seeds `seed, seed + 1, ...`, generated in parallel.
pub fn generate_corpus(n: usize, spec: &SynthSpec, seed: u64) -> Result<Vec<SynthSample>> {
    if n == 0 {
        return Err(invalid("corpus size must be at least 1"));
    }
    spec.validate()?;
    par::map_range(n, |i| generate(spec, seed.wrapping_add(i as u64)))
        .into_iter()
        .collect()
}

/// Rounds `v * num / den` half-up using exact integer arithmetic.
fn scale_half_up(v: usize, num: usize, den: usize) -> usize {
    (2 * v * num + den) / (2 * den)
}

/// A span mapped onto `target_extent` timesteps, clamped into range.
pub fn rescale_span(span: Span, extent: usize, target_extent: usize) -> Span {
    let a = scale_half_up(span.0, target_extent, extent).min(target_extent - 1);
    let b = scale_half_up(span.1, target_extent, extent).min(target_extent - 1);
    (a, b.max(a))
}

/// Per-timestep labels for a `target_extent`-long sequence: Content inside
/// any rescaled content span, Whitespace elsewhere.
pub fn labels_from_gt(gt: &GtStructure, target_extent: usize) -> Result<LabelSeq> {
    if target_extent == 0 {
        return Err(invalid("target extent must be positive"));
    }
    gt.validate()?;
    let mut labels = vec![Label::Whitespace; target_extent];
    for &span in &gt.content_spans {
        let (a, b) = rescale_span(span, gt.extent, target_extent);
        labels[a..=b].fill(Label::Content);
    }
    Ok(LabelSeq::new(labels))
}

pub const MANIFEST: &str = "manifest.csv";

/// Ground-truth path paired with an image: `<stem>.gt.json` alongside it.
pub fn gt_path_for(image: &Path) -> std::path::PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}.gt.json"))
}

/// One manifest line: image file name (relative to the corpus dir) and seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
}

/// Writes `table_NNNNN.png`, its ground truth, and the manifest.
pub fn write_corpus(dir: &Path, samples: &[SynthSample]) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<ManifestEntry> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestEntry {
            file: format!("table_{i:05}.png"),
            seed: s.seed,
        })
        .collect();
    let written: Vec<Result<()>> = par::map_range(samples.len(), |i| {
        let img_path = dir.join(&entries[i].file);
        imageio::save_png(&img_path, &samples[i].image)?;
        samples[i].gt_file().save(&gt_path_for(&img_path))
    });
    written.into_iter().collect::<Result<()>>()?;
    let mut manifest = String::from("file,seed\n");
    for e in &entries {
        manifest.push_str(&format!("{},{}\n", e.file, e.seed));
    }
    fsutil::write_atomic(&dir.join(MANIFEST), manifest.as_bytes())?;
    Ok(entries)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fsutil::read_to_string(&path)?;
    let bad = |detail: String| Error::Format {
        path: path.clone(),
        detail,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("file,seed") {
        return Err(bad("missing `file,seed` header".into()));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (file, seed) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("line {}: expected `file,seed`", n + 2)))?;
        let seed = seed
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {}: bad seed `{seed}`", n + 2)))?;
        out.push(ManifestEntry {
            file: file.trim().to_string(),
            seed,
        });
    }
    Ok(out)
}
