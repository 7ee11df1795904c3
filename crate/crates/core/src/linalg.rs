//! Dense row-major matrices and the handful of kernels the recurrent
//! layers need. Batched products go through `matrixmultiply`; the
//! per-timestep matrix-vector products are hand-written.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Contiguous block of rows `start..end`.
    pub fn rows_slice(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.cols..end * self.cols]
    }
}

/// A strided view: `rows x cols` elements where element (i, j) lives at
/// `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn of(m: &'a Matrix) -> Self {
        View {
            data: &m.data,
            rows: m.rows,
            cols: m.cols,
            rs: m.cols,
            cs: 1,
        }
    }

    /// Columns `start..end` of a matrix.
    pub fn cols_of(m: &'a Matrix, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= m.cols);
        View {
            data: &m.data[start.min(m.data.len())..],
            rows: m.rows,
            cols: end - start,
            rs: m.cols,
            cs: 1,
        }
    }

    /// Rows `start..end` of a matrix.
    pub fn rows_of(m: &'a Matrix, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= m.rows);
        View {
            data: &m.data[start * m.cols..end * m.cols],
            rows: end - start,
            cols: m.cols,
            rs: m.cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn check_extent(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view exceeds its backing slice");
        }
    }
}

/// `out = beta * out + a * b` where `out` is a contiguous row-major block of
/// shape `a.rows x b.cols` with row stride `out_rs`.
pub fn gemm_into(a: View<'_>, b: View<'_>, beta: f64, out: &mut [f64], out_rs: usize) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(out.len() >= (m - 1) * out_rs + n, "gemm output too small");
    if k == 0 {
        for i in 0..m {
            out[i * out_rs..i * out_rs + n]
                .iter_mut()
                .for_each(|v| *v *= beta);
        }
        return;
    }
    a.check_extent();
    b.check_extent();
    // SAFETY: extents of both operands and the output were checked above
    // against their backing slices; matrixmultiply reads/writes only
    // within those strided extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr(),
            out_rs as isize,
            1,
        );
    }
}

/// Returns `a * b` as a new matrix.
pub fn matmul(a: View<'_>, b: View<'_>) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    let n = out.cols;
    gemm_into(a, b, 0.0, &mut out.data, n);
    out
}

/// `out += a * b`, shapes must agree.
pub fn matmul_acc(a: View<'_>, b: View<'_>, out: &mut Matrix) {
    assert_eq!((a.rows, b.cols), (out.rows, out.cols));
    let n = out.cols;
    gemm_into(a, b, 1.0, &mut out.data, n);
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[j] += sum_k m[row0 + j, k] * x[k]` for `j in 0..out.len()`.
pub fn matvec_rows_acc(m: &Matrix, row0: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, x.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o += dot(m.row(row0 + j), x);
    }
}

/// `out[k] += sum_j m[row0 + j, k] * v[j]`, i.e. a transposed product over a
/// block of rows.
pub fn matvec_t_rows_acc(m: &Matrix, row0: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, out.len());
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            axpy(vj, m.row(row0 + j), out);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
