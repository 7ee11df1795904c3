use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelParams};

/// Half-width of the Xavier/Glorot uniform range.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill(block: &mut [f64], rows_per_gate: usize, fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = xavier_bound(fan_in, rows_per_gate);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite xavier bound");
    for v in block.iter_mut() {
        *v = dist.sample(rng);
    }
}

/// Xavier-uniform weights (fan-in/fan-out per gate block), zero biases.
///
/// Draws come from ChaCha8 seeded with `seed`, walking the parameter
/// blocks in checkpoint order, so a seed fully determines the model.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ModelParams::zeros(*cfg);
    let h = cfg.hidden;
    for layer in &mut m.layers {
        let d = layer.input_dim;
        fill(layer.w.as_mut_slice(), h, d, &mut rng);
        fill(layer.u.as_mut_slice(), h, h, &mut rng);
    }
    fill(m.dense_w.as_mut_slice(), 2, 2 * h, &mut rng);
    m
}
