//! Training: weighted cross-entropy, backpropagation through time, Adam,
//! and a finite-difference gradient checker.
//!
//! Each image is its own batch: one backward pass and one Adam update per
//! image, images visited in a per-epoch shuffled order derived from the
//! run seed.

mod adam;
mod bptt;
mod gradcheck;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::preprocess::FloatImage;
use crate::types::Axis;

pub use adam::{adam_step, AdamState};
pub use bptt::{backward, backward_from_trace, Gradients};
pub use gradcheck::{
    compare_gradients, grad_check, reduced_problem, relative_error, GradCheckReport, REDUCED_D,
    REDUCED_H, REDUCED_T,
};
pub use loss::{weighted_bce, LabelSeq, LossConfig, PROB_CLAMP};

/// Epochs used for column models when not overridden.
pub const COLUMN_EPOCHS: usize = 10;
/// Epochs used for row models when not overridden.
pub const ROW_EPOCHS: usize = 35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0005,
            epochs: COLUMN_EPOCHS,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_axis(axis: Axis) -> Self {
        TrainConfig {
            epochs: match axis {
                Axis::Column => COLUMN_EPOCHS,
                Axis::Row => ROW_EPOCHS,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("{name} = {b} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("Adam epsilon must be positive"));
        }
        self.loss.validate()
    }
}

/// One training example: a preprocessed image and its per-timestep labels.
pub type Sample = (FloatImage, LabelSeq);

/// Trains a freshly initialized model (init seed = `cfg.seed`). Returns the
/// final parameters and the mean per-image loss of every epoch.
pub fn train(
    dataset: &[Sample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    train_with(dataset, cfg, init_params(model_cfg, cfg.seed), |_, _| {})
}

/// Trains starting from `params`, calling `on_epoch(epoch, mean_loss)`
/// after every epoch (epochs numbered from 1).
pub fn train_with<F>(
    dataset: &[Sample],
    cfg: &TrainConfig,
    mut params: ModelParams,
    mut on_epoch: F,
) -> Result<(ModelParams, Vec<f64>)>
where
    F: FnMut(usize, f64),
{
    if dataset.is_empty() {
        return Err(invalid("training set is empty"));
    }
    cfg.validate()?;
    params.validate()?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (image, labels) = &dataset[i];
            let (loss, g) = backward(image, labels, &params, &cfg.loss)?;
            adam_step(&mut params, &g, &mut state, cfg);
            total += loss;
        }
        let mean = total / dataset.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((params, history))
}
