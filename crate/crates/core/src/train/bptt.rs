//! Full-unroll backpropagation through time for the stacked bi-directional
//! model, the dense head and the weighted cross-entropy.

use std::ops::{Deref, DerefMut};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, View};
use crate::model::{
    forward_trace, BiLayerTrace, CellType, DirectionTrace, ForwardTrace, LayerParams, ModelParams,
    LAYER1_BACKWARD, LAYER1_FORWARD, LAYER2_BACKWARD, LAYER2_FORWARD,
};
use crate::par;
use crate::preprocess::FloatImage;

use super::loss::{weighted_bce, LabelSeq, LossConfig, PROB_CLAMP};

/// `∂loss/∂θ` for every parameter, shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl Deref for Gradients {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

/// Loss and gradients for one image.
pub fn backward(
    image: &FloatImage,
    labels: &LabelSeq,
    m: &ModelParams,
    w: &LossConfig,
) -> Result<(f64, Gradients)> {
    let trace = forward_trace(image, m)?;
    backward_from_trace(&trace, labels, m, w)
}

pub fn backward_from_trace(
    trace: &ForwardTrace,
    labels: &LabelSeq,
    m: &ModelParams,
    w: &LossConfig,
) -> Result<(f64, Gradients)> {
    let t_len = trace.probs.len();
    if labels.len() != t_len {
        return Err(invalid(format!(
            "{} labels for a {}-step sequence",
            labels.len(),
            t_len
        )));
    }
    let loss = weighted_bce(&trace.probs, labels, w)?;
    let mut g = m.zeros_like();

    // softmax + weighted NLL: ∂/∂logit_k = (w_y / T)(p_k - [k = y]),
    // zero where the clamp is active
    let mut dlogits = Matrix::zeros(t_len, 2);
    for (t, (p, &y)) in trace.probs.rows().iter().zip(labels.labels()).enumerate() {
        let yi = y.index();
        if p[yi] < PROB_CLAMP {
            continue;
        }
        let scale = w.weight(y) / t_len as f64;
        let row = dlogits.row_mut(t);
        for k in 0..2 {
            row[k] = scale * (p[k] - if k == yi { 1.0 } else { 0.0 });
        }
    }
    g.dense_w = linalg::matmul(View::of(&dlogits).t(), View::of(&trace.layer2.output));
    for t in 0..t_len {
        g.dense_b[0] += dlogits.get(t, 0);
        g.dense_b[1] += dlogits.get(t, 1);
    }
    let d_l2 = linalg::matmul(View::of(&dlogits), View::of(&m.dense_w));

    let (g2f, g2b, d_l1) = bilayer_backward(
        &trace.layer2,
        &trace.layer1.output,
        &d_l2,
        &m.layers[LAYER2_FORWARD],
        &m.layers[LAYER2_BACKWARD],
        true,
    );
    let d_l1 = d_l1.expect("requested input gradient");
    let (g1f, g1b, _) = bilayer_backward(
        &trace.layer1,
        &trace.input,
        &d_l1,
        &m.layers[LAYER1_FORWARD],
        &m.layers[LAYER1_BACKWARD],
        false,
    );
    g.layers[LAYER1_FORWARD] = g1f;
    g.layers[LAYER1_BACKWARD] = g1b;
    g.layers[LAYER2_FORWARD] = g2f;
    g.layers[LAYER2_BACKWARD] = g2b;

    if !loss.is_finite() {
        return Err(Error::Numeric {
            block: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    if let Some(block) = g.non_finite_block() {
        return Err(Error::Numeric {
            block: format!("gradient {block}"),
            detail: "backpropagation produced NaN or infinity".into(),
        });
    }
    Ok((loss, Gradients(g)))
}

fn split_halves(d: &Matrix, h: usize) -> (Matrix, Matrix) {
    let t = d.rows();
    let mut a = Matrix::zeros(t, h);
    let mut b = Matrix::zeros(t, h);
    for i in 0..t {
        a.row_mut(i).copy_from_slice(&d.row(i)[..h]);
        b.row_mut(i).copy_from_slice(&d.row(i)[h..]);
    }
    (a, b)
}

fn bilayer_backward(
    trace: &BiLayerTrace,
    input: &Matrix,
    d_out: &Matrix,
    fwd: &LayerParams,
    bwd: &LayerParams,
    want_dx: bool,
) -> (LayerParams, LayerParams, Option<Matrix>) {
    let (dh_f, dh_b) = split_halves(d_out, fwd.hidden);
    let ((gf, dxf), (gb, dxb)) = par::join(
        || direction_backward(&trace.forward, input, &dh_f, fwd, want_dx),
        || direction_backward(&trace.backward, input, &dh_b, bwd, want_dx),
    );
    let dx = match (dxf, dxb) {
        (Some(mut a), Some(b)) => {
            linalg::axpy(1.0, b.as_slice(), a.as_mut_slice());
            Some(a)
        }
        _ => None,
    };
    (gf, gb, dx)
}

/// Backpropagates `dh` (gradient w.r.t. each emitted hidden state) through
/// one scan. Returns the parameter gradients and, optionally, the gradient
/// w.r.t. the scan's input sequence.
fn direction_backward(
    trace: &DirectionTrace,
    input: &Matrix,
    dh: &Matrix,
    p: &LayerParams,
    want_dx: bool,
) -> (LayerParams, Option<Matrix>) {
    let t_len = dh.rows();
    let hid = p.hidden;
    let gw = p.cell.gates() * hid;
    let zeros = vec![0.0; hid];

    // pre-activation gate gradients per timestep, stacked like the weights
    let mut da = Matrix::zeros(t_len, gw);
    let mut carry_h = vec![0.0; hid];
    let mut carry_c = vec![0.0; hid];
    let mut next_h = vec![0.0; hid];
    let mut scratch = vec![0.0; hid];

    let order: Vec<usize> = trace.order().collect();
    for &t in order.iter().rev() {
        let prev = trace.prev_index(t);
        let h_prev = prev.map_or(&zeros[..], |i| trace.h.row(i));
        let gates = trace.gates.row(t);
        let dh_t: Vec<f64> = dh.row(t).iter().zip(&carry_h).map(|(a, b)| a + b).collect();
        let row = da.row_mut(t);
        match p.cell {
            CellType::Gru => {
                let (z, rest) = gates.split_at(hid);
                let (r, cand) = rest.split_at(hid);
                for k in 0..hid {
                    let dcand = dh_t[k] * z[k];
                    let dz = dh_t[k] * (cand[k] - h_prev[k]);
                    next_h[k] = dh_t[k] * (1.0 - z[k]);
                    row[2 * hid + k] = dcand * (1.0 - cand[k] * cand[k]);
                    row[k] = dz * z[k] * (1.0 - z[k]);
                }
                // gradient w.r.t. r ⊙ h_prev through the candidate
                scratch.iter_mut().for_each(|v| *v = 0.0);
                linalg::matvec_t_rows_acc(&p.u, 2 * hid, &row[2 * hid..], &mut scratch);
                for k in 0..hid {
                    let dr = scratch[k] * h_prev[k];
                    next_h[k] += scratch[k] * r[k];
                    row[hid + k] = dr * r[k] * (1.0 - r[k]);
                }
                linalg::matvec_t_rows_acc(&p.u, 0, &row[..2 * hid], &mut next_h);
            }
            CellType::Lstm => {
                let c_t = trace.c.row(t);
                let c_prev = prev.map_or(&zeros[..], |i| trace.c.row(i));
                for k in 0..hid {
                    let (i, f, o, g) =
                        (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
                    let tc = c_t[k].tanh();
                    let dc = carry_c[k] + dh_t[k] * o * (1.0 - tc * tc);
                    let d_o = dh_t[k] * tc;
                    row[k] = dc * g * i * (1.0 - i);
                    row[hid + k] = dc * c_prev[k] * f * (1.0 - f);
                    row[2 * hid + k] = d_o * o * (1.0 - o);
                    row[3 * hid + k] = dc * i * (1.0 - g * g);
                    carry_c[k] = dc * f;
                }
                next_h.iter_mut().for_each(|v| *v = 0.0);
                linalg::matvec_t_rows_acc(&p.u, 0, row, &mut next_h);
            }
        }
        std::mem::swap(&mut carry_h, &mut next_h);
    }

    let mut g = LayerParams::zeros(p.cell, p.input_dim, hid);
    g.w = linalg::matmul(View::of(&da).t(), View::of(input));
    for t in 0..t_len {
        linalg::axpy(1.0, da.row(t), &mut g.b);
    }
    let mut h_prev = Matrix::zeros(t_len, hid);
    for t in 0..t_len {
        if let Some(i) = trace.prev_index(t) {
            h_prev.row_mut(t).copy_from_slice(trace.h.row(i));
        }
    }
    match p.cell {
        CellType::Gru => {
            let u = g.u.as_mut_slice();
            let (zr, cand) = u.split_at_mut(2 * hid * hid);
            linalg::gemm_into(View::cols_of(&da, 0, 2 * hid).t(), View::of(&h_prev), 0.0, zr, hid);
            linalg::gemm_into(
                View::cols_of(&da, 2 * hid, 3 * hid).t(),
                View::of(&trace.rh),
                0.0,
                cand,
                hid,
            );
        }
        CellType::Lstm => {
            g.u = linalg::matmul(View::of(&da).t(), View::of(&h_prev));
        }
    }
    let dx = want_dx.then(|| linalg::matmul(View::of(&da), View::of(&p.w)));
    debug_assert_eq!(g.w.rows(), gw);
    (g, dx)
}
