//! Raw numeric kernels shared by the autodiff tape and the step-wise
//! inference paths.

use crate::error::{DsdError, Result};

/// Borrowed row-major matrix, optionally viewed transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        MatRef {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Logical transpose without copying.
    pub fn t(self) -> Self {
        MatRef {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = alpha * a * b + beta * c` with `c` row-major of shape `(a.rows, b.cols)`.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    assert_eq!(c.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and extents describe the borrowed slices exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y += x * w` for a row vector `x` (len k) and row-major `w` (k x n).
pub fn vec_mat_acc(x: &[f64], w: &[f64], n: usize, y: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * n);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * n..(i + 1) * n];
        for (yj, wj) in y.iter_mut().zip(row) {
            *yj += xi * wj;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable `log(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// LU factorisation with partial pivoting, returning the inverse of the
/// `n x n` row-major matrix `m`.
///
/// Fails when a pivot falls below `1e-12 * max|m_ij|`.
pub fn invert(m: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(m.len(), n * n);
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let threshold = 1e-12 * scale;
    if scale == 0.0 {
        return Err(DsdError::SingularMatrix {
            pivot: 0.0,
            threshold,
        });
    }
    let mut lu = m.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax < threshold || pmax == 0.0 {
            return Err(DsdError::SingularMatrix {
                pivot: pmax,
                threshold,
            });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let piv = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / piv;
            lu[i * n + k] = f;
            if f != 0.0 {
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
    }
    // Solve LU X = P I column by column.
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            col[i] = if perm[i] == c { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            let mut s = col[i];
            for j in 0..i {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for j in i + 1..n {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    Ok(inv)
}

/// One LSTM cell step. Gate layout in the `4h` pre-activation is
/// `[input, forget, candidate, output]`.
///
/// `z` must hold `x * wx + b` on entry; it is overwritten with the
/// post-activation gates. Returns nothing; writes `h_out` and `c_out`.
pub fn lstm_cell(
    z: &mut [f64],
    h_prev: &[f64],
    c_prev: &[f64],
    wh: &[f64],
    h_out: &mut [f64],
    c_out: &mut [f64],
) {
    let h = h_prev.len();
    vec_mat_acc(h_prev, wh, 4 * h, z);
    for j in 0..h {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[h + j]);
        let g = z[2 * h + j].tanh();
        let o = sigmoid(z[3 * h + j]);
        z[j] = i;
        z[h + j] = f;
        z[2 * h + j] = g;
        z[3 * h + j] = o;
        let c = f * c_prev[j] + i * g;
        c_out[j] = c;
        h_out[j] = o * c.tanh();
    }
}
