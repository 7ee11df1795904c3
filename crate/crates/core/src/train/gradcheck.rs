use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{forward, init_params, CellType, ModelConfig, ModelParams};
use crate::preprocess::FloatImage;
use crate::types::{Axis, Label};

use super::bptt::{backward, Gradients};
use super::loss::{weighted_bce, LabelSeq, LossConfig};

/// Timesteps of the reduced gradient-check problem.
pub const REDUCED_T: usize = 8;
/// Features per timestep of the reduced problem.
pub const REDUCED_D: usize = 6;
/// Hidden size of the reduced problem.
pub const REDUCED_H: usize = 5;

/// A small seeded model, input and label sequence for gradient checking:
/// T = 8, D = 6, H = 5, laid out as a column (8x6) or row (6x8) image.
/// Biases are randomized so that no gate sits at a symmetric point.
pub fn reduced_problem(cell: CellType, axis: Axis, seed: u64) -> (ModelParams, FloatImage, LabelSeq) {
    let cfg = ModelConfig {
        axis,
        cell,
        input_dim: REDUCED_D,
        hidden: REDUCED_H,
    };
    let mut m = init_params(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    for l in &mut m.layers {
        l.b.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    m.dense_b = vec![0.05, -0.05];
    let (w, h) = match axis {
        Axis::Column => (REDUCED_T, REDUCED_D),
        Axis::Row => (REDUCED_D, REDUCED_T),
    };
    let pixels = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let image = FloatImage::new(w, h, pixels).expect("unit-range pixels");
    let labels = (0..REDUCED_T)
        .map(|_| {
            if rng.random_bool(0.4) {
                Label::Whitespace
            } else {
                Label::Content
            }
        })
        .collect();
    (m, image, labels)
}

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients from [`backward`] with central differences
/// of step `epsilon` for every parameter.
pub fn grad_check(
    m: &ModelParams,
    image: &FloatImage,
    labels: &LabelSeq,
    epsilon: f64,
    w: &LossConfig,
) -> Result<GradCheckReport> {
    let (_, g) = backward(image, labels, m, w)?;
    compare_gradients(m, image, labels, epsilon, w, &g)
}

/// Checks an arbitrary set of analytic gradients against finite differences.
pub fn compare_gradients(
    m: &ModelParams,
    image: &FloatImage,
    labels: &LabelSeq,
    epsilon: f64,
    w: &LossConfig,
    analytic: &Gradients,
) -> Result<GradCheckReport> {
    let names = ModelParams::block_names();
    let mut probe = m.clone();
    let loss_at = |p: &ModelParams| -> Result<f64> { weighted_bce(&forward(image, p)?, labels, w) };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_block: names[0].clone(),
        worst_index: 0,
        checked: 0,
    };
    let analytic_blocks = analytic.blocks();
    for (b, name) in names.iter().enumerate() {
        let len = m.blocks()[b].len();
        for i in 0..len {
            let orig = m.blocks()[b][i];
            probe.blocks_mut()[b][i] = orig + epsilon;
            let plus = loss_at(&probe)?;
            probe.blocks_mut()[b][i] = orig - epsilon;
            let minus = loss_at(&probe)?;
            probe.blocks_mut()[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic_blocks[b][i], numeric);
            report.checked += 1;
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = err;
                report.worst_block = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
