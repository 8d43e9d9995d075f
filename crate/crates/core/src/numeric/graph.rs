//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and returns [`Grads`].

use super::kernels::{self, gemm, MatRef};
use super::tensor::Tensor;
use crate::error::{DsdError, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct LstmNode {
    x: Var,
    wx: Var,
    wh: Var,
    b: Var,
    h0: Option<Var>,
    c0: Option<Var>,
    reverse: bool,
    /// Post-activation gates, `n x 4h`, stored in time order.
    gates: Vec<f64>,
    /// Cell states, `n x h`, in time order.
    cells: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Clamp(Var, f64, f64),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    SumAll(Var),
    MeanRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Inverse(Var),
    Lstm(Box<LstmNode>),
    /// Loss node whose gradient with respect to its input was computed
    /// during the forward pass.
    Fused(Var, Box<Tensor>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(DsdError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.binary(a, b, v, Op::Div(a, b)))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if self.value(b).dims() != (1, c) {
            return Err(DsdError::Shape(format!(
                "add_row: {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut v = self.value(a).clone();
        let brow = self.value(b).data().to_vec();
        for i in 0..r {
            for (x, y) in v.row_mut(i).iter_mut().zip(&brow) {
                *x += y;
            }
        }
        Ok(self.binary(a, b, v, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.unary(a, v, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.unary(a, v, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(kernels::sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(a, v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.unary(a, v, Op::Log(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(a, v, Op::LeakyRelu(a, slope))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.unary(a, v, Op::Square(a))
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, _) = src.dims();
        let mut v = src.clone();
        for i in 0..r {
            let lse = kernels::log_sum_exp(src.row(i));
            for x in v.row_mut(i) {
                *x -= lse;
            }
        }
        self.unary(a, v, Op::LogSoftmaxRows(a))
    }

    /// Row-wise log-sum-exp; output is `r x 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, _) = src.dims();
        let data = (0..r).map(|i| kernels::log_sum_exp(src.row(i))).collect();
        let v = Tensor::from_vec(r, 1, data);
        self.unary(a, v, Op::LogSumExpRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::SumAll(a))
    }

    /// Mean over rows; output is `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, c) = src.dims();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(src.row(i)) {
                *o += x;
            }
        }
        let inv = 1.0 / r as f64;
        let v = Tensor::from_vec(1, c, out.into_iter().map(|x| x * inv).collect());
        self.unary(a, v, Op::MeanRows(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let src = self.value(a);
        let (r, c) = src.dims();
        assert!(start <= end && end <= c, "slice_cols {start}..{end} of {c}");
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..end]);
        }
        let v = Tensor::from_vec(r, w, data);
        self.unary(a, v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let src = self.value(a);
        let (r, c) = src.dims();
        assert!(start <= end && end <= r, "slice_rows {start}..{end} of {r}");
        let v = Tensor::from_vec(end - start, c, src.data()[start * c..end * c].to_vec());
        self.unary(a, v, Op::SliceRows(a, start))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        self.slice_rows(a, i, i + 1)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let (r, c) = src.dims();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < r, "gather_rows index {i} of {r}");
            data.extend_from_slice(src.row(i));
        }
        let v = Tensor::from_vec(idx.len(), c, data);
        self.unary(a, v, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != r) {
            return Err(DsdError::Shape("concat_cols: row mismatch".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_vec(r, total, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != c) {
            return Err(DsdError::Shape("concat_rows: column mismatch".into()));
        }
        let mut data = Vec::new();
        let mut r = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            r += self.value(p).rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_vec(r, c, data), Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).clone().reshape(rows, cols)?;
        Ok(self.unary(a, v, Op::Reshape(a)))
    }

    /// Matrix inverse via LU with partial pivoting. The backward pass applies
    /// `d(A^-1) = -A^-1 dA A^-1`.
    pub fn inverse(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let (r, c) = src.dims();
        if r != c {
            return Err(DsdError::Shape(format!("inverse of non-square {r}x{c}")));
        }
        let inv = kernels::invert(src.data(), r)?;
        Ok(self.unary(a, Tensor::from_vec(r, r, inv), Op::Inverse(a)))
    }

    /// One LSTM layer over a whole sequence.
    ///
    /// `x` is `n x d`, `wx` is `d x 4h`, `wh` is `h x 4h`, `b` is `1 x 4h`;
    /// `h0`/`c0` default to zeros. With `reverse` the sequence is consumed
    /// from the last row to the first; output row `t` is always the hidden
    /// state at input row `t`.
    #[allow(clippy::too_many_arguments)]
    pub fn lstm(
        &mut self,
        x: Var,
        wx: Var,
        wh: Var,
        b: Var,
        h0: Option<Var>,
        c0: Option<Var>,
        reverse: bool,
    ) -> Result<Var> {
        let (n, d) = self.value(x).dims();
        let (d2, h4) = self.value(wx).dims();
        let h = h4 / 4;
        if d != d2 || h4 != 4 * h || self.value(wh).dims() != (h, h4) || self.value(b).dims() != (1, h4)
        {
            return Err(DsdError::Shape(format!(
                "lstm: x {:?}, wx {:?}, wh {:?}, b {:?}",
                self.value(x).shape(),
                self.value(wx).shape(),
                self.value(wh).shape(),
                self.value(b).shape()
            )));
        }
        for s in [h0, c0].into_iter().flatten() {
            if self.value(s).dims() != (1, h) {
                return Err(DsdError::Shape("lstm: initial state must be 1 x h".into()));
            }
        }
        let mut z = vec![0.0; n * h4];
        gemm(
            1.0,
            MatRef::new(self.value(x).data(), n, d),
            MatRef::new(self.value(wx).data(), d, h4),
            0.0,
            &mut z,
        );
        let bias = self.value(b).data();
        for t in 0..n {
            for (zj, bj) in z[t * h4..(t + 1) * h4].iter_mut().zip(bias) {
                *zj += bj;
            }
        }
        let mut hs = vec![0.0; n * h];
        let mut cs = vec![0.0; n * h];
        let mut h_prev = h0.map_or(vec![0.0; h], |v| self.value(v).data().to_vec());
        let mut c_prev = c0.map_or(vec![0.0; h], |v| self.value(v).data().to_vec());
        let whd = self.value(wh).data();
        for step in 0..n {
            let t = if reverse { n - 1 - step } else { step };
            let (hrow, crow) = (&mut hs[t * h..(t + 1) * h], &mut cs[t * h..(t + 1) * h]);
            kernels::lstm_cell(&mut z[t * h4..(t + 1) * h4], &h_prev, &c_prev, whd, hrow, crow);
            h_prev.copy_from_slice(hrow);
            c_prev.copy_from_slice(crow);
        }
        let rg = [x, wx, wh, b]
            .into_iter()
            .chain(h0)
            .chain(c0)
            .any(|v| self.rg(v));
        let node = LstmNode {
            x,
            wx,
            wh,
            b,
            h0,
            c0,
            reverse,
            gates: z,
            cells: cs,
        };
        Ok(self.push(Tensor::from_vec(n, h, hs), Op::Lstm(Box::new(node)), rg))
    }

    /// Records a scalar loss whose input gradient is already known.
    pub fn fused_loss(&mut self, input: Var, loss: f64, grad: Tensor) -> Var {
        assert_eq!(grad.shape(), self.value(input).shape());
        self.unary(input, Tensor::scalar(loss), Op::Fused(input, Box::new(grad)))
    }

    /// Reverse pass from the scalar `root`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(1, 1, 1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims();
                let n = bv.cols();
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(
                        1.0,
                        MatRef::new(g.data(), m, n),
                        MatRef::new(bv.data(), k, n).t(),
                        0.0,
                        &mut ga,
                    );
                    self.acc(grads, *a, Tensor::from_vec(m, k, ga));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(
                        1.0,
                        MatRef::new(av.data(), m, k).t(),
                        MatRef::new(g.data(), m, n),
                        0.0,
                        &mut gb,
                    );
                    self.acc(grads, *b, Tensor::from_vec(k, n, gb));
                }
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.acc(grads, *a, g.zip_map(bv, |x, y| x * y));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, g.zip_map(av, |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.rg(*a) {
                    self.acc(grads, *a, g.zip_map(bv, |x, y| x / y));
                }
                if self.rg(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let t = out.zip_map(bv, |q, y| -q / y);
                    self.acc(grads, *b, g.zip_map(&t, |x, y| x * y));
                }
            }
            Op::AddRow(a, b) => {
                self.acc(grads, *a, g.clone());
                if self.rg(*b) {
                    let (r, c) = g.dims();
                    let mut gb = vec![0.0; c];
                    for i in 0..r {
                        for (o, x) in gb.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    self.acc(grads, *b, Tensor::from_vec(1, c, gb));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.scale(*s)),
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::Sigmoid(a) => self.acc(grads, *a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
            Op::Tanh(a) => self.acc(grads, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Exp(a) => self.acc(grads, *a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => self.acc(grads, *a, g.zip_map(self.value(*a), |x, y| x / y)),
            Op::LeakyRelu(a, s) => {
                let s = *s;
                self.acc(
                    grads,
                    *a,
                    g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { s * x }),
                )
            }
            Op::Square(a) => self.acc(grads, *a, g.zip_map(self.value(*a), |x, y| 2.0 * x * y)),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.acc(
                    grads,
                    *a,
                    g.zip_map(self.value(*a), |x, y| if y < lo || y > hi { 0.0 } else { x }),
                )
            }
            Op::LogSoftmaxRows(a) => {
                let (r, _) = out.dims();
                let mut ga = g.clone();
                for i in 0..r {
                    let gs: f64 = g.row(i).iter().sum();
                    for (o, &y) in ga.row_mut(i).iter_mut().zip(out.row(i)) {
                        *o -= y.exp() * gs;
                    }
                }
                self.acc(grads, *a, ga)
            }
            Op::LogSumExpRows(a) => {
                let av = self.value(*a);
                let (r, _) = av.dims();
                let mut ga = av.clone();
                for i in 0..r {
                    let (lse, gi) = (out.get(i, 0), g.get(i, 0));
                    for x in ga.row_mut(i) {
                        *x = gi * (*x - lse).exp();
                    }
                }
                self.acc(grads, *a, ga)
            }
            Op::SumAll(a) => {
                let (r, c) = self.value(*a).dims();
                self.acc(grads, *a, Tensor::filled(r, c, g.item()))
            }
            Op::MeanRows(a) => {
                let (r, c) = self.value(*a).dims();
                let mut ga = Tensor::zeros(r, c);
                let inv = 1.0 / r as f64;
                for i in 0..r {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.data()) {
                        *o = x * inv;
                    }
                }
                self.acc(grads, *a, ga)
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.value(*a).dims();
                let w = g.cols();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                }
                self.acc(grads, *a, ga)
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).dims();
                let mut ga = Tensor::zeros(r, c);
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.acc(grads, *a, ga)
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.value(*a).dims();
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                self.acc(grads, *a, ga)
            }
            Op::ConcatCols(parts) => {
                let r = g.rows();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut gp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            gp.extend_from_slice(&g.row(i)[off..off + w]);
                        }
                        self.acc(grads, p, Tensor::from_vec(r, w, gp));
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).rows();
                    if self.rg(p) {
                        let gp = g.data()[off * c..(off + n) * c].to_vec();
                        self.acc(grads, p, Tensor::from_vec(n, c, gp));
                    }
                    off += n;
                }
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                let ga = Tensor::new(shape, g.data().to_vec()).expect("reshape grad");
                self.acc(grads, *a, ga)
            }
            Op::Inverse(a) => {
                // dA = -Y^T g Y^T with Y = A^-1.
                let n = out.rows();
                let mut tmp = vec![0.0; n * n];
                gemm(
                    1.0,
                    MatRef::new(out.data(), n, n).t(),
                    MatRef::new(g.data(), n, n),
                    0.0,
                    &mut tmp,
                );
                let mut ga = vec![0.0; n * n];
                gemm(
                    -1.0,
                    MatRef::new(&tmp, n, n),
                    MatRef::new(out.data(), n, n).t(),
                    0.0,
                    &mut ga,
                );
                self.acc(grads, *a, Tensor::from_vec(n, n, ga))
            }
            Op::Lstm(node) => self.backprop_lstm(node, out, g, grads),
            Op::Fused(a, grad) => self.acc(grads, *a, grad.scale(g.item())),
        }
    }

    fn backprop_lstm(&self, node: &LstmNode, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let xv = self.value(node.x);
        let (n, d) = xv.dims();
        let h = out.cols();
        let h4 = 4 * h;
        let whd = self.value(node.wh).data();
        let h0 = node.h0.map_or(vec![0.0; h], |v| self.value(v).data().to_vec());
        let c0 = node.c0.map_or(vec![0.0; h], |v| self.value(v).data().to_vec());
        let hs = out.data();
        let (gates, cells) = (&node.gates, &node.cells);

        let mut dz = vec![0.0; n * h4];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        // Previous-step index in processing order.
        let prev = |t: usize| -> Option<usize> {
            if node.reverse {
                (t + 1 < n).then_some(t + 1)
            } else {
                t.checked_sub(1)
            }
        };
        for step in (0..n).rev() {
            let t = if node.reverse { n - 1 - step } else { step };
            let gt = &gates[t * h4..(t + 1) * h4];
            let c_prev: &[f64] = match prev(t) {
                Some(p) => &cells[p * h..(p + 1) * h],
                None => &c0,
            };
            let dzt = &mut dz[t * h4..(t + 1) * h4];
            for j in 0..h {
                let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let c = cells[t * h + j];
                let tc = c.tanh();
                let dh = g.data()[t * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dzt[j] = dc * gg * i * (1.0 - i);
                dzt[h + j] = dc * c_prev[j] * f * (1.0 - f);
                dzt[2 * h + j] = dc * i * (1.0 - gg * gg);
                dzt[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            // dh_prev = dz_t * wh^T
            for (k, dk) in dh_next.iter_mut().enumerate() {
                let row = &whd[k * h4..(k + 1) * h4];
                *dk = row.iter().zip(dzt.iter()).map(|(w, z)| w * z).sum();
            }
        }
        if self.rg(node.x) {
            let mut gx = vec![0.0; n * d];
            gemm(
                1.0,
                MatRef::new(&dz, n, h4),
                MatRef::new(self.value(node.wx).data(), d, h4).t(),
                0.0,
                &mut gx,
            );
            self.acc(grads, node.x, Tensor::from_vec(n, d, gx));
        }
        if self.rg(node.wx) {
            let mut gw = vec![0.0; d * h4];
            gemm(
                1.0,
                MatRef::new(xv.data(), n, d).t(),
                MatRef::new(&dz, n, h4),
                0.0,
                &mut gw,
            );
            self.acc(grads, node.wx, Tensor::from_vec(d, h4, gw));
        }
        if self.rg(node.b) {
            let mut gb = vec![0.0; h4];
            for t in 0..n {
                for (o, x) in gb.iter_mut().zip(&dz[t * h4..(t + 1) * h4]) {
                    *o += x;
                }
            }
            self.acc(grads, node.b, Tensor::from_vec(1, h4, gb));
        }
        if self.rg(node.wh) {
            // Rows of hidden states feeding each step.
            let mut hprev = vec![0.0; n * h];
            for t in 0..n {
                let src: &[f64] = match prev(t) {
                    Some(p) => &hs[p * h..(p + 1) * h],
                    None => &h0,
                };
                hprev[t * h..(t + 1) * h].copy_from_slice(src);
            }
            let mut gw = vec![0.0; h * h4];
            gemm(
                1.0,
                MatRef::new(&hprev, n, h).t(),
                MatRef::new(&dz, n, h4),
                0.0,
                &mut gw,
            );
            self.acc(grads, node.wh, Tensor::from_vec(h, h4, gw));
        }
        if let Some(h0v) = node.h0 {
            self.acc(grads, h0v, Tensor::from_vec(1, h, dh_next.clone()));
        }
        if let Some(c0v) = node.c0 {
            self.acc(grads, c0v, Tensor::from_vec(1, h, dc_next.clone()));
        }
    }
}
