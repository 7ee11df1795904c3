//! Raster types and the preprocessing pipeline that turns a grayscale table
//! crop into the fixed-size, dilated, normalized input of a sequence model.
//!
//! Stages, in order: Sauvola binarization, removal of ruling lines and
//! other elongated components, box-filter resize, rectangular dilation
//! oriented for the target axis, and normalization to `[0, 1]`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::par;
use crate::types::Axis;

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

/// Binary raster: 1 = ink (foreground), 0 = background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(invalid(format!("binary image holds value {v}")));
        }
        Ok(BinaryImage {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![1; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Renders ink as black on white, for debugging dumps.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v != 0 { 0 } else { 255 }).collect(),
        }
    }
}

/// Real-valued raster with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("float image value {v} outside [0, 1]")));
        }
        Ok(FloatImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("zero-area image {width}x{height}")));
    }
    if len != width * height {
        return Err(invalid(format!(
            "image data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// Rectangular structuring element, `width` x `height`, both odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_width: usize,
    pub target_height: usize,
    pub dilation_iterations: usize,
    /// Used for the column model: tall, joins the rows of one column.
    pub column_kernel: Kernel,
    /// Used for the row model: wide, joins the words of one row.
    pub row_kernel: Kernel,
    pub binarize_window: usize,
    pub binarize_k: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_width: 1600,
            target_height: 512,
            dilation_iterations: 3,
            column_kernel: Kernel {
                width: 3,
                height: 5,
            },
            row_kernel: Kernel {
                width: 5,
                height: 3,
            },
            binarize_window: 31,
            binarize_k: 0.3,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_width == 0 || self.target_height == 0 {
            return Err(invalid("target dimensions must be positive"));
        }
        for (name, k) in [("column", self.column_kernel), ("row", self.row_kernel)] {
            if k.width == 0 || k.height == 0 || k.width % 2 == 0 || k.height % 2 == 0 {
                return Err(invalid(format!(
                    "{name} kernel {}x{} must have odd dimensions >= 1",
                    k.width, k.height
                )));
            }
        }
        if self.binarize_window == 0 {
            return Err(invalid("binarization window must be positive"));
        }
        if !(self.binarize_k > 0.0 && self.binarize_k < 1.0) {
            return Err(invalid(format!(
                "binarization k = {} must lie in (0, 1)",
                self.binarize_k
            )));
        }
        Ok(())
    }

    pub fn kernel_for(&self, axis: Axis) -> Kernel {
        match axis {
            Axis::Column => self.column_kernel,
            Axis::Row => self.row_kernel,
        }
    }

    /// Extent of the resized image along the scanned axis, i.e. the number
    /// of timesteps a model for `axis` sees.
    pub fn timesteps(&self, axis: Axis) -> usize {
        match axis {
            Axis::Column => self.target_width,
            Axis::Row => self.target_height,
        }
    }

    /// Length of each timestep's feature vector for `axis`.
    pub fn features(&self, axis: Axis) -> usize {
        match axis {
            Axis::Column => self.target_height,
            Axis::Row => self.target_width,
        }
    }
}

/// Sauvola dynamic range of the standard deviation for 8-bit input.
pub const SAUVOLA_R: f64 = 128.0;

/// Sauvola adaptive thresholding over a square window.
///
/// The window is clamped to the smaller image dimension and, at the
/// borders, to the part of the window that lies inside the image. A pixel
/// becomes ink when its luminance is at or below
/// `mean * (1 + k * (std / R - 1))`; the non-strict comparison keeps
/// uniformly black regions (mean 0, threshold 0) as ink.
pub fn binarize(img: &GrayImage, cfg: &PreprocessConfig) -> Result<BinaryImage> {
    if img.width == 0 || img.height == 0 {
        return Err(invalid("cannot binarize a zero-area image"));
    }
    if !(cfg.binarize_k > 0.0 && cfg.binarize_k < 1.0) {
        return Err(invalid(format!("binarization k = {} outside (0, 1)", cfg.binarize_k)));
    }
    let (w, h) = (img.width, img.height);
    let window = cfg.binarize_window.min(w).min(h).max(1);
    let half = window / 2;
    let k = cfg.binarize_k;

    // Summed-area tables with a zero guard row/column.
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sq = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_s = 0u64;
        let mut row_q = 0u64;
        for x in 0..w {
            let v = img.data[y * w + x] as u64;
            row_s += v;
            row_q += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row_s;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_q;
        }
    }

    let mut out = vec![0u8; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half).min(h - 1) + 1;
        for (x, px) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half).min(w - 1) + 1;
            let area = ((y1 - y0) * (x1 - x0)) as u64;
            let s = sum[y1 * stride + x1] + sum[y0 * stride + x0]
                - sum[y0 * stride + x1]
                - sum[y1 * stride + x0];
            let q = sq[y1 * stride + x1] + sq[y0 * stride + x0]
                - sq[y0 * stride + x1]
                - sq[y1 * stride + x0];
            let lum = img.data[y * w + x];
            *px = sauvola_is_ink(lum, s, q, area, k) as u8;
        }
    });
    BinaryImage::new(w, h, out)
}

/// Threshold decision shared by the integral-image path and test oracles:
/// `sum`/`sum_sq` are exact integer moments over `area` pixels.
pub fn sauvola_is_ink(lum: u8, sum: u64, sum_sq: u64, area: u64, k: f64) -> bool {
    let n = area as f64;
    let mean = sum as f64 / n;
    let var = (sum_sq as f64 / n - mean * mean).max(0.0);
    let threshold = mean * (1.0 + k * (var.sqrt() / SAUVOLA_R - 1.0));
    (lum as f64) <= threshold
}

/// Axis-aligned bounding box of a connected component, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl ComponentBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Labels 8-connected foreground components. Returns per-pixel labels
/// (0 = background, components numbered from 1 in raster-scan order of
/// their first pixel) and each component's bounding box.
pub fn label_components(bin: &BinaryImage) -> (Vec<u32>, Vec<ComponentBox>) {
    let (w, h) = (bin.width, bin.height);
    let mut labels = vec![0u32; w * h];
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if bin.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = boxes.len() as u32 + 1;
        let (sx, sy) = (start % w, start / w);
        let mut bb = ComponentBox {
            x0: sx,
            y0: sy,
            x1: sx,
            y1: sy,
        };
        labels[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (px, py) = (p % w, p / w);
            bb.x0 = bb.x0.min(px);
            bb.x1 = bb.x1.max(px);
            bb.y0 = bb.y0.min(py);
            bb.y1 = bb.y1.max(py);
            for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if bin.data[q] != 0 && labels[q] == 0 {
                        labels[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        boxes.push(bb);
    }
    (labels, boxes)
}

/// Maximum thickness, in pixels, of a component still treated as a rule.
pub const RULE_MAX_THICKNESS: usize = 5;
/// Minimum span of a rule as a fraction of the image dimension it runs along.
pub const RULE_MIN_SPAN: f64 = 0.5;
/// Elongation at which any component counts as a line.
pub const LINE_MIN_ASPECT: f64 = 20.0;
/// Minimum length of an elongated line relative to the image dimension.
pub const LINE_MIN_LENGTH: f64 = 0.3;

/// Whether a component with bounding box `bb` in an image of the given size
/// is a ruling line or other non-text stroke.
pub fn is_nontext(bb: &ComponentBox, image_width: usize, image_height: usize) -> bool {
    let (bw, bh) = (bb.width(), bb.height());
    let (iw, ih) = (image_width as f64, image_height as f64);
    let horizontal_rule = bw as f64 >= RULE_MIN_SPAN * iw && bh <= RULE_MAX_THICKNESS;
    let vertical_rule = bh as f64 >= RULE_MIN_SPAN * ih && bw <= RULE_MAX_THICKNESS;
    let (long, short, dim) = if bw >= bh {
        (bw, bh, iw)
    } else {
        (bh, bw, ih)
    };
    let elongated =
        long as f64 / short as f64 >= LINE_MIN_ASPECT && long as f64 >= LINE_MIN_LENGTH * dim;
    horizontal_rule || vertical_rule || elongated
}

/// Deletes ruling lines and long thin strokes; every other component is
/// kept pixel for pixel.
pub fn remove_nontext(bin: &BinaryImage) -> BinaryImage {
    let (labels, boxes) = label_components(bin);
    let drop: Vec<bool> = boxes
        .iter()
        .map(|bb| is_nontext(bb, bin.width, bin.height))
        .collect();
    if !drop.iter().any(|&d| d) {
        return bin.clone();
    }
    let data = bin
        .data
        .iter()
        .zip(&labels)
        .map(|(&v, &l)| if l != 0 && drop[l as usize - 1] { 0 } else { v })
        .collect();
    BinaryImage {
        width: bin.width,
        height: bin.height,
        data,
    }
}

/// Overlap of each destination cell with the source cells, in units where a
/// source cell is `dst_len` long and a destination cell is `src_len` long,
/// so every overlap is an integer.
fn box_weights(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst_len)
        .map(|o| {
            let lo = o * src_len;
            let hi = (o + 1) * src_len;
            let first = lo / dst_len;
            let last = (hi - 1) / dst_len;
            (first..=last)
                .filter_map(|s| {
                    let s_lo = s * dst_len;
                    let s_hi = (s + 1) * dst_len;
                    let ov = hi.min(s_hi).saturating_sub(lo.max(s_lo));
                    (ov > 0).then_some((s, ov as u64))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted (box filter) resize to the configured target size. A
/// destination pixel is ink when at least half of its footprint is ink;
/// the comparison is exact integer arithmetic, so ties resolve to ink.
pub fn resize_binary(bin: &BinaryImage, cfg: &PreprocessConfig) -> BinaryImage {
    resize_binary_to(bin, cfg.target_width, cfg.target_height)
}

pub fn resize_binary_to(bin: &BinaryImage, width: usize, height: usize) -> BinaryImage {
    if bin.width == width && bin.height == height {
        return bin.clone();
    }
    let wx = box_weights(bin.width, width);
    let wy = box_weights(bin.height, height);
    let total = (bin.width * bin.height) as u64;
    let src_w = bin.width;
    let mut out = vec![0u8; width * height];
    par::for_each_row(&mut out, width, |oy, row| {
        for (ox, px) in row.iter_mut().enumerate() {
            let mut covered = 0u64;
            for &(sy, oy_w) in &wy[oy] {
                let src_row = &bin.data[sy * src_w..(sy + 1) * src_w];
                let mut line = 0u64;
                for &(sx, ox_w) in &wx[ox] {
                    line += ox_w * src_row[sx] as u64;
                }
                covered += line * oy_w;
            }
            *px = (2 * covered >= total) as u8;
        }
    });
    BinaryImage {
        width,
        height,
        data: out,
    }
}

/// Morphological dilation by a filled `kernel_width` x `kernel_height`
/// rectangle centered on its anchor, applied `iterations` times. Pixels
/// outside the image are background.
pub fn dilate(
    bin: &BinaryImage,
    kernel_width: usize,
    kernel_height: usize,
    iterations: usize,
) -> Result<BinaryImage> {
    if kernel_width.is_multiple_of(2) || kernel_height.is_multiple_of(2) {
        return Err(invalid(format!(
            "dilation kernel {kernel_width}x{kernel_height} must have odd dimensions"
        )));
    }
    let mut cur = bin.clone();
    for _ in 0..iterations {
        cur = dilate_once(&cur, kernel_width / 2, kernel_height / 2);
    }
    Ok(cur)
}

/// One rectangular dilation, done separably: horizontal max filter of
/// radius `rx`, then vertical of radius `ry`.
fn dilate_once(bin: &BinaryImage, rx: usize, ry: usize) -> BinaryImage {
    let (w, h) = (bin.width, bin.height);
    let mut horiz = vec![0u8; w * h];
    for y in 0..h {
        let src = &bin.data[y * w..(y + 1) * w];
        let dst = &mut horiz[y * w..(y + 1) * w];
        running_max(src, dst, rx);
    }
    let mut out = vec![0u8; w * h];
    for x in 0..w {
        let col: Vec<u8> = (0..h).map(|y| horiz[y * w + x]).collect();
        let mut dst = vec![0u8; h];
        running_max(&col, &mut dst, ry);
        for (y, v) in dst.into_iter().enumerate() {
            out[y * w + x] = v;
        }
    }
    BinaryImage {
        width: w,
        height: h,
        data: out,
    }
}

/// Binary sliding-window max over `[i - r, i + r]`, using a running count.
fn running_max(src: &[u8], dst: &mut [u8], r: usize) {
    let n = src.len();
    let mut count = 0usize;
    // window for i=0 covers [0, r]
    for &v in src.iter().take((r + 1).min(n)) {
        count += v as usize;
    }
    for i in 0..n {
        dst[i] = (count > 0) as u8;
        // slide to i + 1: add i + 1 + r, drop i - r
        if i + 1 + r < n {
            count += src[i + 1 + r] as usize;
        }
        if i >= r {
            count -= src[i - r] as usize;
        }
    }
}

/// Ink becomes 1.0, background 0.0.
pub fn normalize(bin: &BinaryImage) -> FloatImage {
    FloatImage {
        width: bin.width,
        height: bin.height,
        data: bin.data.iter().map(|&v| v as f64).collect(),
    }
}

/// Every intermediate raster of one preprocessing run, for debugging dumps.
#[derive(Debug, Clone)]
pub struct Stages {
    pub binarized: BinaryImage,
    pub cleaned: BinaryImage,
    pub resized: BinaryImage,
    pub dilated: BinaryImage,
    pub normalized: FloatImage,
}

pub fn preprocess_stages(img: &GrayImage, axis: Axis, cfg: &PreprocessConfig) -> Result<Stages> {
    cfg.validate()?;
    let binarized = binarize(img, cfg)?;
    let cleaned = remove_nontext(&binarized);
    let resized = resize_binary(&cleaned, cfg);
    let kernel = cfg.kernel_for(axis);
    let dilated = dilate(&resized, kernel.width, kernel.height, cfg.dilation_iterations)?;
    let normalized = normalize(&dilated);
    Ok(Stages {
        binarized,
        cleaned,
        resized,
        dilated,
        normalized,
    })
}

/// Full pipeline for one axis; the output is always
/// `target_width x target_height`.
pub fn preprocess(img: &GrayImage, axis: Axis, cfg: &PreprocessConfig) -> Result<FloatImage> {
    Ok(preprocess_stages(img, axis, cfg)?.normalized)
}

/// Foreground used for evaluation: the binarized image with non-text
/// strokes removed, at the original resolution.
pub fn evaluation_foreground(img: &GrayImage, cfg: &PreprocessConfig) -> Result<BinaryImage> {
    Ok(remove_nontext(&binarize(img, cfg)?))
}
