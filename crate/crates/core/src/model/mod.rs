//! Two-layer bi-directional recurrent sequence labeler with a per-timestep
//! dense + softmax head.
//!
//! One model handles one axis. A column model reads the preprocessed image
//! one pixel column per timestep (features = image height); a row model
//! reads one pixel row per timestep (features = image width). Each of the
//! two stacked layers runs a forward and a backward scan and concatenates
//! their hidden states, so the head sees `2H` features per timestep.

mod cell;
pub mod checkpoint;
mod init;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, View};
use crate::par;
use crate::preprocess::{FloatImage, PreprocessConfig};
use crate::types::Axis;

pub use cell::{gru_cell, lstm_cell, run_direction, DirectionTrace};
pub use init::{init_params, xavier_bound};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Gru,
    Lstm,
}

impl CellType {
    /// Number of stacked gate blocks in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::Gru => "gru",
            CellType::Lstm => "lstm",
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellType::Gru),
            "lstm" => Ok(CellType::Lstm),
            other => Err(invalid(format!("unknown cell type `{other}` (expected gru or lstm)"))),
        }
    }
}

/// Scan direction of one recurrent pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Shape of a model: axis, cell, per-timestep input size and hidden size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub axis: Axis,
    pub cell: CellType,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Hidden size used for column models at full resolution.
pub const COLUMN_HIDDEN: usize = 512;
/// Hidden size used for row models at full resolution.
pub const ROW_HIDDEN: usize = 1024;

impl ModelConfig {
    /// Full-size configuration: 512 input pixels and 512 hidden units for
    /// columns; 1600 input pixels and 1024 hidden units for rows.
    pub fn standard(axis: Axis, cell: CellType) -> Self {
        Self::for_preprocess(axis, cell, &PreprocessConfig::default(), None)
    }

    /// Input size follows the preprocessing target; hidden size defaults to
    /// the full-size value for the axis.
    pub fn for_preprocess(
        axis: Axis,
        cell: CellType,
        pre: &PreprocessConfig,
        hidden: Option<usize>,
    ) -> Self {
        let default_hidden = match axis {
            Axis::Column => COLUMN_HIDDEN,
            Axis::Row => ROW_HIDDEN,
        };
        ModelConfig {
            axis,
            cell,
            input_dim: pre.features(axis),
            hidden: hidden.unwrap_or(default_hidden),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(invalid(format!(
                "model dimensions must be positive (input {}, hidden {})",
                self.input_dim, self.hidden
            )));
        }
        Ok(())
    }
}

/// Weights of one recurrent pass (one layer, one direction).
///
/// Gate blocks are stacked row-wise: GRU rows are `[z; r; h]` (update,
/// reset, candidate), LSTM rows are `[i; f; o; c]` (input, forget, output,
/// candidate). `w` is `(gates*H) x D`, `u` is `(gates*H) x H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub cell: CellType,
    pub input_dim: usize,
    pub hidden: usize,
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(cell: CellType, input_dim: usize, hidden: usize) -> Self {
        let g = cell.gates() * hidden;
        LayerParams {
            cell,
            input_dim,
            hidden,
            w: Matrix::zeros(g, input_dim),
            u: Matrix::zeros(g, hidden),
            b: vec![0.0; g],
        }
    }

    /// Input weights of gate `gate` as an `H x D` row block.
    pub fn w_gate(&self, gate: usize) -> &[f64] {
        self.w.rows_slice(gate * self.hidden, (gate + 1) * self.hidden)
    }

    pub fn u_gate(&self, gate: usize) -> &[f64] {
        self.u.rows_slice(gate * self.hidden, (gate + 1) * self.hidden)
    }

    pub fn b_gate(&self, gate: usize) -> &[f64] {
        &self.b[gate * self.hidden..(gate + 1) * self.hidden]
    }

    fn check_shape(&self) -> Result<()> {
        let g = self.cell.gates() * self.hidden;
        if self.w.rows() != g
            || self.w.cols() != self.input_dim
            || self.u.rows() != g
            || self.u.cols() != self.hidden
            || self.b.len() != g
        {
            return Err(invalid("recurrent layer parameter shapes are inconsistent"));
        }
        Ok(())
    }
}

/// Index of each recurrent pass inside [`ModelParams::layers`].
pub const LAYER1_FORWARD: usize = 0;
pub const LAYER1_BACKWARD: usize = 1;
pub const LAYER2_FORWARD: usize = 2;
pub const LAYER2_BACKWARD: usize = 3;

const PASS_NAMES: [&str; 4] = [
    "layer1.forward",
    "layer1.backward",
    "layer2.forward",
    "layer2.backward",
];

/// All weights of one axis model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Four passes, indexed by the `LAYER*` constants. Layer-2 passes take
    /// the `2H`-wide concatenation of layer 1 as input.
    pub layers: Vec<LayerParams>,
    /// `2 x 2H`
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let (d, h, cell) = (config.input_dim, config.hidden, config.cell);
        ModelParams {
            config,
            layers: vec![
                LayerParams::zeros(cell, d, h),
                LayerParams::zeros(cell, d, h),
                LayerParams::zeros(cell, 2 * h, h),
                LayerParams::zeros(cell, 2 * h, h),
            ],
            dense_w: Matrix::zeros(2, 2 * h),
            dense_b: vec![0.0; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn axis(&self) -> Axis {
        self.config.axis
    }

    pub fn cell(&self) -> CellType {
        self.config.cell
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Parameter blocks in canonical (checkpoint) order: for each pass,
    /// `W, U, b`; then `dense_W`, `dense_b`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(14);
        for l in &self.layers {
            out.push(l.w.as_slice());
            out.push(l.u.as_slice());
            out.push(l.b.as_slice());
        }
        out.push(self.dense_w.as_slice());
        out.push(self.dense_b.as_slice());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        for l in &mut self.layers {
            out.push(l.w.as_mut_slice());
            out.push(l.u.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(self.dense_b.as_mut_slice());
        out
    }

    /// Names matching [`blocks`](Self::blocks), used in diagnostics.
    pub fn block_names() -> Vec<String> {
        let mut out = Vec::with_capacity(14);
        for p in PASS_NAMES {
            for t in ["W", "U", "b"] {
                out.push(format!("{p}.{t}"));
            }
        }
        out.push("dense.W".into());
        out.push("dense.b".into());
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// First non-finite block, if any.
    pub fn non_finite_block(&self) -> Option<String> {
        self.blocks()
            .iter()
            .zip(Self::block_names())
            .find(|(b, _)| b.iter().any(|v| !v.is_finite()))
            .map(|(_, n)| n)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.layers.len() != 4 {
            return Err(invalid("a model has exactly four recurrent passes"));
        }
        let h = self.config.hidden;
        for (i, l) in self.layers.iter().enumerate() {
            let d = if i < 2 { self.config.input_dim } else { 2 * h };
            if l.cell != self.config.cell || l.hidden != h || l.input_dim != d {
                return Err(invalid(format!("{} has the wrong shape", PASS_NAMES[i])));
            }
            l.check_shape()?;
        }
        if self.dense_w.rows() != 2 || self.dense_w.cols() != 2 * h || self.dense_b.len() != 2 {
            return Err(invalid("dense head must map 2H features to 2 classes"));
        }
        if let Some(name) = self.non_finite_block() {
            return Err(Error::Numeric {
                block: name,
                detail: "parameter block holds NaN or infinity".into(),
            });
        }
        Ok(())
    }
}

/// `T x D` sequence of real feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTensor(Matrix);

impl SequenceTensor {
    pub fn new(timesteps: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != timesteps * features {
            return Err(invalid(format!(
                "sequence data length {} does not match {timesteps}x{features}",
                data.len()
            )));
        }
        Self::from_matrix(Matrix::from_vec(timesteps, features, data))
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::Numeric {
                block: "sequence".into(),
                detail: "input holds NaN or infinity".into(),
            });
        }
        Ok(SequenceTensor(m))
    }

    pub fn timesteps(&self) -> usize {
        self.0.rows()
    }

    pub fn features(&self) -> usize {
        self.0.cols()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Per-timestep class probabilities: index 0 content, index 1 whitespace.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSeq {
    probs: Vec<[f64; 2]>,
}

/// Allowed deviation of a probability row's sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

impl ProbSeq {
    pub fn new(probs: Vec<[f64; 2]>) -> Result<Self> {
        for (t, p) in probs.iter().enumerate() {
            let ok = p.iter().all(|v| (0.0..=1.0).contains(v))
                && (p[0] + p[1] - 1.0).abs() <= PROB_SUM_TOLERANCE;
            if !ok {
                return Err(invalid(format!("row {t} is not a distribution: {p:?}")));
            }
        }
        Ok(ProbSeq { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.probs
    }

    pub fn whitespace(&self, t: usize) -> f64 {
        self.probs[t][1]
    }
}

/// Numerically stable two-class softmax.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Slices a preprocessed image into timesteps for `axis`: columns
/// (top-to-bottom pixel vectors) or rows (left-to-right pixel vectors).
pub fn image_to_sequence(image: &FloatImage, axis: Axis) -> SequenceTensor {
    let (w, h) = (image.width(), image.height());
    let data = image.data();
    let m = match axis {
        Axis::Row => Matrix::from_vec(h, w, data.to_vec()),
        Axis::Column => {
            let mut m = Matrix::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    m.set(x, y, data[y * w + x]);
                }
            }
            m
        }
    };
    SequenceTensor(m)
}

/// Output of one bi-directional layer: both passes' traces and the
/// concatenated `T x 2H` features.
#[derive(Debug, Clone)]
pub struct BiLayerTrace {
    pub forward: DirectionTrace,
    pub backward: DirectionTrace,
    pub output: Matrix,
}

/// Everything computed by a forward pass that the gradient needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub layer1: BiLayerTrace,
    pub layer2: BiLayerTrace,
    pub probs: ProbSeq,
}

fn concat_halves(a: &Matrix, b: &Matrix) -> Matrix {
    let (t, h) = (a.rows(), a.cols());
    let mut out = Matrix::zeros(t, 2 * h);
    for i in 0..t {
        let row = out.row_mut(i);
        row[..h].copy_from_slice(a.row(i));
        row[h..].copy_from_slice(b.row(i));
    }
    out
}

/// One bi-directional layer: forward and backward scans run independently
/// (in parallel when enabled) and are concatenated per timestep.
pub fn bidirectional_layer(
    input: &Matrix,
    fwd: &LayerParams,
    bwd: &LayerParams,
) -> Result<BiLayerTrace> {
    let (f, b) = par::join(
        || cell::scan(input, fwd, Direction::Forward),
        || cell::scan(input, bwd, Direction::Backward),
    );
    let (f, b) = (f?, b?);
    let output = concat_halves(&f.h, &b.h);
    Ok(BiLayerTrace {
        forward: f,
        backward: b,
        output,
    })
}

/// Both stacked bi-directional layers; returns the `T x 2H` layer-2 output.
pub fn bigru_forward(seq: &SequenceTensor, m: &ModelParams) -> Result<SequenceTensor> {
    let (l1, l2) = encode(seq.matrix(), m)?;
    drop(l1);
    Ok(SequenceTensor(l2.output))
}

fn encode(input: &Matrix, m: &ModelParams) -> Result<(BiLayerTrace, BiLayerTrace)> {
    if input.cols() != m.input_dim() {
        return Err(invalid(format!(
            "sequence has {} features but the model expects {}",
            input.cols(),
            m.input_dim()
        )));
    }
    let l1 = bidirectional_layer(input, &m.layers[LAYER1_FORWARD], &m.layers[LAYER1_BACKWARD])?;
    let l2 = bidirectional_layer(
        &l1.output,
        &m.layers[LAYER2_FORWARD],
        &m.layers[LAYER2_BACKWARD],
    )?;
    Ok((l1, l2))
}

/// Per-timestep logits of the dense head, `T x 2`.
pub fn dense_logits(features: &Matrix, m: &ModelParams) -> Result<Matrix> {
    if features.cols() != 2 * m.hidden() {
        return Err(invalid(format!(
            "dense head expects {} features, got {}",
            2 * m.hidden(),
            features.cols()
        )));
    }
    if !features.is_finite() {
        return Err(Error::Numeric {
            block: "dense input".into(),
            detail: "features hold NaN or infinity".into(),
        });
    }
    let mut logits = linalg::matmul(View::of(features), View::of(&m.dense_w).t());
    for t in 0..logits.rows() {
        let row = logits.row_mut(t);
        row[0] += m.dense_b[0];
        row[1] += m.dense_b[1];
    }
    Ok(logits)
}

/// Dense layer followed by a stable softmax for every timestep.
pub fn dense_softmax(features: &SequenceTensor, m: &ModelParams) -> Result<ProbSeq> {
    let logits = dense_logits(features.matrix(), m)?;
    probs_from_logits(&logits)
}

pub fn probs_from_logits(logits: &Matrix) -> Result<ProbSeq> {
    let probs: Vec<[f64; 2]> = (0..logits.rows())
        .map(|t| softmax2([logits.get(t, 0), logits.get(t, 1)]))
        .collect();
    if probs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            block: "softmax".into(),
            detail: "non-finite logits".into(),
        });
    }
    ProbSeq::new(probs)
}

fn check_image(image: &FloatImage, m: &ModelParams) -> Result<()> {
    let features = match m.axis() {
        Axis::Column => image.height(),
        Axis::Row => image.width(),
    };
    if features != m.input_dim() {
        return Err(invalid(format!(
            "{} model expects {} pixels per timestep, image is {}x{}",
            m.axis(),
            m.input_dim(),
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Forward pass keeping every intermediate needed for backpropagation.
pub fn forward_trace(image: &FloatImage, m: &ModelParams) -> Result<ForwardTrace> {
    check_image(image, m)?;
    let seq = image_to_sequence(image, m.axis());
    sequence_trace(seq.into_matrix(), m)
}

pub(crate) fn sequence_trace(input: Matrix, m: &ModelParams) -> Result<ForwardTrace> {
    let (layer1, layer2) = encode(&input, m)?;
    let logits = dense_logits(&layer2.output, m)?;
    let probs = probs_from_logits(&logits)?;
    Ok(ForwardTrace {
        input,
        layer1,
        layer2,
        probs,
    })
}

/// Class probabilities for every timestep of a preprocessed image.
pub fn forward(image: &FloatImage, m: &ModelParams) -> Result<ProbSeq> {
    Ok(forward_trace(image, m)?.probs)
}

#[cfg(test)]
mod tests;
