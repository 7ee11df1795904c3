//! GRU and LSTM cells and single-direction scans over a sequence.
//!
//! GRU:  z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
//!       h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h), h' = (1 - z) ⊙ h + z ⊙ h̃
//! LSTM: i, f, o = σ(·), g = tanh(·), c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c')

use crate::error::{invalid, Result};
use crate::linalg::{self, sigmoid, Matrix, View};

use super::{CellType, Direction, LayerParams, SequenceTensor};

/// Activations recorded by one scan, indexed by timestep (not by the order
/// in which the scan visited them).
#[derive(Debug, Clone)]
pub struct DirectionTrace {
    pub direction: Direction,
    /// Post-activation gates, `T x (gates*H)`, same stacking as the weights.
    pub gates: Matrix,
    /// Hidden state emitted at each timestep, `T x H`.
    pub h: Matrix,
    /// LSTM cell state per timestep; empty for GRU.
    pub c: Matrix,
    /// GRU `r ⊙ h_prev` per timestep; empty for LSTM.
    pub rh: Matrix,
}

impl DirectionTrace {
    /// Timestep whose state feeds timestep `t`, if any.
    pub fn prev_index(&self, t: usize) -> Option<usize> {
        let last = self.h.rows() - 1;
        match self.direction {
            Direction::Forward => t.checked_sub(1),
            Direction::Backward => (t < last).then_some(t + 1),
        }
    }

    /// Visiting order of the scan.
    pub fn order(&self) -> Box<dyn Iterator<Item = usize>> {
        order(self.h.rows(), self.direction)
    }
}

fn order(t: usize, dir: Direction) -> Box<dyn Iterator<Item = usize>> {
    match dir {
        Direction::Forward => Box::new(0..t),
        Direction::Backward => Box::new((0..t).rev()),
    }
}

fn gru_step(
    xp: &[f64],
    h_prev: &[f64],
    u: &Matrix,
    gates: &mut [f64],
    rh: &mut [f64],
    h: &mut [f64],
) {
    let hid = h.len();
    gates[..2 * hid].copy_from_slice(&xp[..2 * hid]);
    linalg::matvec_rows_acc(u, 0, h_prev, &mut gates[..2 * hid]);
    for g in &mut gates[..2 * hid] {
        *g = sigmoid(*g);
    }
    for k in 0..hid {
        rh[k] = gates[hid + k] * h_prev[k];
    }
    let (zr, cand) = gates.split_at_mut(2 * hid);
    cand.copy_from_slice(&xp[2 * hid..]);
    linalg::matvec_rows_acc(u, 2 * hid, rh, cand);
    for k in 0..hid {
        let c = cand[k].tanh();
        cand[k] = c;
        let z = zr[k];
        h[k] = (1.0 - z) * h_prev[k] + z * c;
    }
}

fn lstm_step(
    xp: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    u: &Matrix,
    gates: &mut [f64],
    c: &mut [f64],
    h: &mut [f64],
) {
    let hid = h.len();
    gates.copy_from_slice(xp);
    linalg::matvec_rows_acc(u, 0, h_prev, gates);
    for g in &mut gates[..3 * hid] {
        *g = sigmoid(*g);
    }
    for g in &mut gates[3 * hid..] {
        *g = g.tanh();
    }
    for k in 0..hid {
        let (i, f, o, g) = (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
}

fn check_cell(p: &LayerParams, want: CellType, x: usize, h: usize) -> Result<()> {
    if p.cell != want {
        return Err(invalid(format!("expected {want} parameters, got {}", p.cell)));
    }
    if x != p.input_dim || h != p.hidden {
        return Err(invalid(format!(
            "cell expects input {} / hidden {}, got {x} / {h}",
            p.input_dim, p.hidden
        )));
    }
    Ok(())
}

fn input_projection(x: &[f64], p: &LayerParams) -> Vec<f64> {
    let mut xp = p.b.clone();
    linalg::matvec_rows_acc(&p.w, 0, x, &mut xp);
    xp
}

/// One GRU step.
pub fn gru_cell(x: &[f64], h_prev: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    check_cell(p, CellType::Gru, x.len(), h_prev.len())?;
    let hid = p.hidden;
    let xp = input_projection(x, p);
    let mut gates = vec![0.0; 3 * hid];
    let mut rh = vec![0.0; hid];
    let mut h = vec![0.0; hid];
    gru_step(&xp, h_prev, &p.u, &mut gates, &mut rh, &mut h);
    Ok(h)
}

/// One LSTM step; returns `(h, c)`.
pub fn lstm_cell(
    x: &[f64],
    state: (&[f64], &[f64]),
    p: &LayerParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h_prev, c_prev) = state;
    check_cell(p, CellType::Lstm, x.len(), h_prev.len())?;
    if c_prev.len() != p.hidden {
        return Err(invalid("cell state has the wrong length"));
    }
    let hid = p.hidden;
    let xp = input_projection(x, p);
    let mut gates = vec![0.0; 4 * hid];
    let mut c = vec![0.0; hid];
    let mut h = vec![0.0; hid];
    lstm_step(&xp, h_prev, c_prev, &p.u, &mut gates, &mut c, &mut h);
    Ok((h, c))
}

/// Scans `input` (`T x D`) in one direction from a zero state.
pub(crate) fn scan(input: &Matrix, p: &LayerParams, dir: Direction) -> Result<DirectionTrace> {
    if input.cols() != p.input_dim {
        return Err(invalid(format!(
            "layer expects {} features per timestep, got {}",
            p.input_dim,
            input.cols()
        )));
    }
    let t_len = input.rows();
    let hid = p.hidden;
    let gw = p.cell.gates() * hid;

    let mut xp = linalg::matmul(View::of(input), View::of(&p.w).t());
    for t in 0..t_len {
        linalg::axpy(1.0, &p.b, xp.row_mut(t));
    }

    let mut gates = Matrix::zeros(t_len, gw);
    let mut h = Matrix::zeros(t_len, hid);
    let (mut c, mut rh) = match p.cell {
        CellType::Gru => (Matrix::zeros(0, 0), Matrix::zeros(t_len, hid)),
        CellType::Lstm => (Matrix::zeros(t_len, hid), Matrix::zeros(0, 0)),
    };
    let mut h_prev = vec![0.0; hid];
    let mut c_prev = vec![0.0; hid];
    for t in order(t_len, dir) {
        let xrow = xp.row(t);
        match p.cell {
            CellType::Gru => {
                gru_step(xrow, &h_prev, &p.u, gates.row_mut(t), rh.row_mut(t), h.row_mut(t));
            }
            CellType::Lstm => {
                lstm_step(
                    xrow,
                    &h_prev,
                    &c_prev,
                    &p.u,
                    gates.row_mut(t),
                    c.row_mut(t),
                    h.row_mut(t),
                );
                c_prev.copy_from_slice(c.row(t));
            }
        }
        h_prev.copy_from_slice(h.row(t));
    }
    Ok(DirectionTrace {
        direction: dir,
        gates,
        h,
        c,
        rh,
    })
}

/// Hidden states of one pass over `seq`, `T x H`, row `t` holding the state
/// emitted at timestep `t` regardless of scan direction.
pub fn run_direction(
    seq: &SequenceTensor,
    layer: &LayerParams,
    direction: Direction,
) -> Result<SequenceTensor> {
    let trace = scan(seq.matrix(), layer, direction)?;
    SequenceTensor::from_matrix(trace.h)
}
