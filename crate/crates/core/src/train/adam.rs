use crate::model::ModelParams;

use super::bptt::Gradients;
use super::TrainConfig;

/// First/second moment estimates, one block per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ModelParams, g: &Gradients, s: &mut AdamState, cfg: &TrainConfig) {
    s.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(s.t as i32);
    let c2 = 1.0 - b2.powi(s.t as i32);
    let grads = g.blocks();
    for (i, theta) in params.blocks_mut().into_iter().enumerate() {
        let (m, v, gb) = (&mut s.m[i], &mut s.v[i], grads[i]);
        assert_eq!(theta.len(), gb.len(), "gradient block {i} shape mismatch");
        for k in 0..theta.len() {
            let gk = gb[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, CellType, ModelConfig};
    use crate::types::Axis;

    fn model() -> ModelParams {
        init_params(
            &ModelConfig {
                axis: Axis::Row,
                cell: CellType::Gru,
                input_dim: 3,
                hidden: 2,
            },
            1,
        )
    }

    fn constant_grad(m: &ModelParams, c: f64) -> Gradients {
        let mut g = m.zeros_like();
        for b in g.blocks_mut() {
            b.iter_mut().for_each(|v| *v = c);
        }
        Gradients(g)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let cfg = TrainConfig::default();
        let mut m = model();
        let before = m.clone();
        let mut s = AdamState::new(&m);
        adam_step(&mut m, &constant_grad(&before, 0.0), &mut s, &cfg);
        assert_eq!(m, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        for c in [0.3, -2.0, 1e-3] {
            let mut m = model();
            let before = m.clone();
            let mut s = AdamState::new(&m);
            adam_step(&mut m, &constant_grad(&before, c), &mut s, &cfg);
            for (a, b) in m.blocks().iter().zip(before.blocks()) {
                for (x, y) in a.iter().zip(b) {
                    assert!(((x - y) + cfg.learning_rate * c.signum()).abs() < 1e-6);
                }
            }
        }
    }

    /// Independent scalar Adam, written from the update rule.
    fn scalar_adam(theta: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut th) = (0.0, 0.0, theta);
        let mut out = Vec::new();
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            out.push(th);
        }
        out
    }

    #[test]
    fn momentum_continues_after_gradient_vanishes() {
        let cfg = TrainConfig::default();
        let mut m = model();
        let theta0 = m.dense_b[0];
        let mut s = AdamState::new(&m);
        let expect = scalar_adam(theta0, &[0.5, 0.0, 0.0], cfg.learning_rate);
        let mut got = Vec::new();
        for g in [0.5, 0.0, 0.0] {
            let grad = constant_grad(&m, g);
            adam_step(&mut m, &grad, &mut s, &cfg);
            got.push(m.dense_b[0]);
        }
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let steps: Vec<f64> = [theta0, got[0], got[1], got[2]].windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|&d| d < 0.0));
        assert!(steps[2].abs() < steps[1].abs());
        assert!(s.v.iter().flatten().all(|&v| v >= 0.0));
    }
}
