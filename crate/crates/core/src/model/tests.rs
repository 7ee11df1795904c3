use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn scalar_layer(cell: CellType, weight: f64) -> LayerParams {
    let mut p = LayerParams::zeros(cell, 1, 1);
    p.w.as_mut_slice().iter_mut().for_each(|v| *v = weight);
    p.u.as_mut_slice().iter_mut().for_each(|v| *v = weight);
    p
}

fn random_model(cell: CellType, axis: Axis, d: usize, h: usize, seed: u64) -> ModelParams {
    let mut m = init_params(
        &ModelConfig {
            axis,
            cell,
            input_dim: d,
            hidden: h,
        },
        seed,
    );
    // non-zero biases so every term of the cell equations is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for l in &mut m.layers {
        l.b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    m.dense_b = vec![0.1, -0.2];
    m
}

fn random_seq(t: usize, d: usize, seed: u64) -> SequenceTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SequenceTensor::new(t, d, (0..t * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn gru_zero_params() {
    let p = LayerParams::zeros(CellType::Gru, 3, 2);
    let h = gru_cell(&[0.3, -1.0, 2.0], &[0.0, 0.0], &p).unwrap();
    assert_eq!(h, vec![0.0, 0.0]);
    let h = gru_cell(&[0.3, -1.0, 2.0], &[0.8, -0.4], &p).unwrap();
    assert_abs_diff_eq!(h[0], 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(h[1], -0.2, epsilon = 1e-15);
}

#[test]
fn gru_scalar_hand_values() {
    let p = scalar_layer(CellType::Gru, 1.0);
    let h = gru_cell(&[1.0], &[0.0], &p).unwrap();
    // z = σ(1) = 0.731059, h̃ = tanh(1) = 0.761594, h = z·h̃
    let oracle = 1.0f64.tanh() / (1.0 + (-1.0f64).exp());
    assert_abs_diff_eq!(h[0], oracle, epsilon = 1e-12);
    assert_abs_diff_eq!(h[0], 0.556770, epsilon = 1e-6);
}

#[test]
fn gru_closed_update_gate_keeps_state() {
    let mut p = scalar_layer(CellType::Gru, 0.7);
    p.b[0] = -60.0;
    let h = gru_cell(&[0.9], &[0.42], &p).unwrap();
    assert_abs_diff_eq!(h[0], 0.42, epsilon = 1e-6);
}

#[test]
fn lstm_zero_params_and_hand_values() {
    let p = LayerParams::zeros(CellType::Lstm, 2, 2);
    let (h, c) = lstm_cell(&[1.0, 2.0], (&[0.0, 0.0], &[0.0, 0.0]), &p).unwrap();
    assert_eq!((h, c), (vec![0.0, 0.0], vec![0.0, 0.0]));
    let (h, c) = lstm_cell(&[1.0, 2.0], (&[0.0, 0.0], &[0.6, -2.0]), &p).unwrap();
    assert_abs_diff_eq!(c[0], 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(c[1], -1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(h[0], 0.5 * 0.3f64.tanh(), epsilon = 1e-15);
    assert_abs_diff_eq!(h[1], 0.5 * (-1.0f64).tanh(), epsilon = 1e-15);

    let p = scalar_layer(CellType::Lstm, 1.0);
    let (h, c) = lstm_cell(&[1.0], (&[0.0], &[0.0]), &p).unwrap();
    // c = i·g = σ(1)·tanh(1), h = o·tanh(c)
    assert_abs_diff_eq!(c[0], 0.556770, epsilon = 1e-6);
    assert_abs_diff_eq!(h[0], 0.369606, epsilon = 1e-6);
}

#[test]
fn cell_dimension_errors() {
    let p = LayerParams::zeros(CellType::Gru, 3, 2);
    assert!(gru_cell(&[1.0], &[0.0, 0.0], &p).is_err());
    assert!(gru_cell(&[1.0, 2.0, 3.0], &[0.0], &p).is_err());
    assert!(lstm_cell(&[1.0, 2.0, 3.0], (&[0.0, 0.0], &[0.0, 0.0]), &p).is_err());
    let seq = random_seq(4, 2, 1);
    assert!(run_direction(&seq, &p, Direction::Forward).is_err());
}

#[test]
fn single_step_directions_agree() {
    for cell in [CellType::Gru, CellType::Lstm] {
        let m = random_model(cell, Axis::Row, 3, 4, 2);
        let seq = random_seq(1, 3, 3);
        let f = run_direction(&seq, &m.layers[0], Direction::Forward).unwrap();
        let b = run_direction(&seq, &m.layers[0], Direction::Backward).unwrap();
        assert_eq!(f, b);
    }
}

#[test]
fn zero_params_give_zero_sequences() {
    let m = ModelParams::zeros(ModelConfig {
        axis: Axis::Column,
        cell: CellType::Gru,
        input_dim: 3,
        hidden: 2,
    });
    let seq = random_seq(5, 3, 4);
    let out = run_direction(&seq, &m.layers[0], Direction::Backward).unwrap();
    assert!(out.matrix().as_slice().iter().all(|&v| v == 0.0));
    let out = bigru_forward(&seq, &m).unwrap();
    assert_eq!((out.timesteps(), out.features()), (5, 4));
    assert!(out.matrix().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn three_step_scalar_oracle() {
    let p = scalar_layer(CellType::Gru, 1.0);
    let xs = [1.0, 0.5, -0.25];
    let seq = SequenceTensor::new(3, 1, xs.to_vec()).unwrap();
    let step = |x: f64, h: f64| {
        let z = sig(x + h);
        let r = sig(x + h);
        let c = (x + r * h).tanh();
        (1.0 - z) * h + z * c
    };
    let f = run_direction(&seq, &p, Direction::Forward).unwrap();
    let mut h = 0.0;
    for t in 0..3 {
        h = step(xs[t], h);
        assert_abs_diff_eq!(f.step(t)[0], h, epsilon = 1e-12);
    }
    let b = run_direction(&seq, &p, Direction::Backward).unwrap();
    let mut h = 0.0;
    for t in (0..3).rev() {
        h = step(xs[t], h);
        assert_abs_diff_eq!(b.step(t)[0], h, epsilon = 1e-12);
    }
}

fn concat(a: &SequenceTensor, b: &SequenceTensor) -> SequenceTensor {
    let (t, h) = (a.timesteps(), a.features());
    let mut data = Vec::with_capacity(t * 2 * h);
    for i in 0..t {
        data.extend_from_slice(a.step(i));
        data.extend_from_slice(b.step(i));
    }
    SequenceTensor::new(t, 2 * h, data).unwrap()
}

fn composed(seq: &SequenceTensor, m: &ModelParams) -> SequenceTensor {
    let f1 = run_direction(seq, &m.layers[0], Direction::Forward).unwrap();
    let b1 = run_direction(seq, &m.layers[1], Direction::Backward).unwrap();
    let l1 = concat(&f1, &b1);
    let f2 = run_direction(&l1, &m.layers[2], Direction::Forward).unwrap();
    let b2 = run_direction(&l1, &m.layers[3], Direction::Backward).unwrap();
    concat(&f2, &b2)
}

#[test]
fn stacked_layers_equal_composition() {
    for cell in [CellType::Gru, CellType::Lstm] {
        let m = random_model(cell, Axis::Column, 3, 2, 11);
        let seq = random_seq(4, 3, 12);
        assert_eq!(bigru_forward(&seq, &m).unwrap(), composed(&seq, &m));
    }
}

#[test]
fn softmax_cases() {
    assert_eq!(softmax2([0.0, 0.0]), [0.5, 0.5]);
    let p = softmax2([3f64.ln(), 0.0]);
    assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-15);
    assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
    // exp(-1000) underflows to exactly 0 in f64; the exact value is ~5e-435
    let p = softmax2([1000.0, 0.0]);
    assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-12);
    let p = softmax2([-1000.0, 1000.0]);
    assert_eq!(p, [0.0, 1.0]);
}

#[test]
fn dense_softmax_zero_head() {
    let m = ModelParams::zeros(ModelConfig {
        axis: Axis::Row,
        cell: CellType::Gru,
        input_dim: 2,
        hidden: 3,
    });
    let feats = SequenceTensor::new(4, 6, vec![0.0; 24]).unwrap();
    let p = dense_softmax(&feats, &m).unwrap();
    assert!(p.rows().iter().all(|r| *r == [0.5, 0.5]));
    let bad = SequenceTensor::new(4, 5, vec![0.0; 20]).unwrap();
    assert!(dense_softmax(&bad, &m).is_err());
}

#[test]
fn forward_shapes_follow_axis() {
    let pre = PreprocessConfig::default();
    let img = FloatImage::new(1600, 512, vec![0.0; 1600 * 512]).unwrap();
    for (axis, t) in [(Axis::Column, 1600), (Axis::Row, 512)] {
        let cfg = ModelConfig::for_preprocess(axis, CellType::Gru, &pre, Some(2));
        let m = init_params(&cfg, 1);
        assert_eq!(forward(&img, &m).unwrap().len(), t);
    }
    let std = ModelConfig::standard(Axis::Row, CellType::Gru);
    assert_eq!((std.input_dim, std.hidden), (1600, 1024));
    let std = ModelConfig::standard(Axis::Column, CellType::Lstm);
    assert_eq!((std.input_dim, std.hidden), (512, 512));
}

#[test]
fn forward_rejects_wrong_dims() {
    let cfg = ModelConfig {
        axis: Axis::Column,
        cell: CellType::Gru,
        input_dim: 16,
        hidden: 2,
    };
    let m = init_params(&cfg, 1);
    let img = FloatImage::new(40, 15, vec![0.0; 600]).unwrap();
    assert!(forward(&img, &m).is_err());
}

#[test]
fn reduced_forward_equals_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (w, h) = (40, 16);
    let data: Vec<f64> = (0..w * h).map(|_| rng.random_range(0..2) as f64).collect();
    let img = FloatImage::new(w, h, data.clone()).unwrap();
    for (axis, d) in [(Axis::Column, h), (Axis::Row, w)] {
        let m = random_model(CellType::Gru, axis, d, 8, 21);
        let got = forward(&img, &m).unwrap();
        // independent slicing: column t = pixels (t, 0..h), row t = pixels (0..w, t)
        let seq = match axis {
            Axis::Column => SequenceTensor::new(
                w,
                h,
                (0..w).flat_map(|x| (0..h).map(move |y| (x, y))).map(|(x, y)| data[y * w + x]).collect(),
            )
            .unwrap(),
            Axis::Row => SequenceTensor::new(h, w, data.clone()).unwrap(),
        };
        let expect = dense_softmax(&composed(&seq, &m), &m).unwrap();
        assert_eq!(got, expect);
    }
}

#[test]
fn direction_symmetry() {
    for cell in [CellType::Gru, CellType::Lstm] {
        let m = random_model(cell, Axis::Row, 3, 4, 31);
        let seq = random_seq(6, 3, 32);
        let out = bidirectional_layer(seq.matrix(), &m.layers[0], &m.layers[1]).unwrap();
        let mut rev = Matrix::zeros(6, 3);
        for t in 0..6 {
            rev.row_mut(t).copy_from_slice(seq.step(5 - t));
        }
        let swapped = bidirectional_layer(&rev, &m.layers[1], &m.layers[0]).unwrap();
        for t in 0..6 {
            let a = out.output.row(t);
            let b = swapped.output.row(5 - t);
            for k in 0..4 {
                assert_abs_diff_eq!(a[k], b[4 + k], epsilon = 1e-12);
                assert_abs_diff_eq!(a[4 + k], b[k], epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn forward_is_pure() {
    let m = random_model(CellType::Lstm, Axis::Column, 8, 3, 41);
    let img = FloatImage::new(10, 8, (0..80).map(|i| (i % 3) as f64 / 2.0).collect()).unwrap();
    assert_eq!(forward(&img, &m).unwrap(), forward(&img, &m).unwrap());
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let cfg = ModelConfig {
        axis: Axis::Row,
        cell: CellType::Lstm,
        input_dim: 7,
        hidden: 5,
    };
    let a = init_params(&cfg, 3);
    assert_eq!(a, init_params(&cfg, 3));
    assert_ne!(a, init_params(&cfg, 4));
    assert!(a.layers.iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
    assert!(a.dense_b.iter().all(|&b| b == 0.0));
    let bound = xavier_bound(7, 5);
    assert!(a.layers[0].w.as_slice().iter().all(|v| v.abs() <= bound));
    a.validate().unwrap();
}

#[test]
fn init_weights_are_centered() {
    // 100 x 100 hidden-to-hidden block per gate: 10^4 draws from U(-a, a)
    let cfg = ModelConfig {
        axis: Axis::Row,
        cell: CellType::Gru,
        input_dim: 1,
        hidden: 100,
    };
    let m = init_params(&cfg, 8);
    let draws = m.layers[0].u_gate(0);
    assert_eq!(draws.len(), 10_000);
    let a = xavier_bound(100, 100);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let std_err = (a * a / 3.0).sqrt() / (draws.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * std_err, "mean {mean} vs 3se {}", 3.0 * std_err);
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    assert!((var - a * a / 3.0).abs() < 0.05 * a * a / 3.0);
}

#[test]
fn probseq_invariant() {
    assert!(ProbSeq::new(vec![[0.2, 0.8]]).is_ok());
    assert!(ProbSeq::new(vec![[0.2, 0.7]]).is_err());
    assert!(ProbSeq::new(vec![[-0.1, 1.1]]).is_err());
}
