//! Named parameter storage and the affine / LSTM building blocks.

use std::collections::HashMap;

use rand::Rng;

use super::graph::{Graph, Var};
use super::kernels;
use super::tensor::Tensor;
use crate::error::{DsdError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named tensors. Order is insertion order and is the
/// order used by checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every parameter on the tape. With `trainable == false` they are
    /// recorded as constants and no gradient flows to them.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters bound to a particular [`Graph`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform `[-k, k]` with `k = 1/sqrt(fan_in)`.
pub fn init_uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let k = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-k..=k)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Unit-variance-preserving uniform init over the joint `[x, h]` fan-in, so
/// stacked layers keep their pre-activation scale.
pub fn init_lstm(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let k = (3.0 / fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-k..=k)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, input: usize, output: usize) -> Self {
        let w = store.add(format!("{name}.w"), init_uniform(rng, input, output, input));
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, output));
        Affine { w, b, input, output }
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        input * output + output
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        g.add_row(y, p.var(self.b))
    }

    /// Plain evaluation on a single row.
    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let mut y = store.get(self.b).data().to_vec();
        kernels::vec_mat_acc(x, store.get(self.w).data(), self.output, &mut y);
        y
    }
}

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

/// A stack of LSTM layers.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub layers: Vec<LstmLayer>,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Recurrent state of an [`LstmParams`] stack for step-wise evaluation.
#[derive(Clone, Debug)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
    ) -> Self {
        assert!(num_layers > 0 && hidden_dim > 0);
        let layers = (0..num_layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { hidden_dim };
                let fan_in = d + hidden_dim;
                LstmLayer {
                    wx: store.add(
                        format!("{name}.l{l}.wx"),
                        init_lstm(rng, d, 4 * hidden_dim, fan_in),
                    ),
                    wh: store.add(
                        format!("{name}.l{l}.wh"),
                        init_lstm(rng, hidden_dim, 4 * hidden_dim, fan_in),
                    ),
                    b: store.add(format!("{name}.l{l}.b"), Tensor::zeros(1, 4 * hidden_dim)),
                }
            })
            .collect();
        LstmParams {
            layers,
            input_dim,
            hidden_dim,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize, num_layers: usize) -> usize {
        (0..num_layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { hidden_dim };
                4 * hidden_dim * (d + hidden_dim) + 4 * hidden_dim
            })
            .sum()
    }

    /// Runs the stack over `x` (`n x input_dim`) and returns the top-layer
    /// hidden states (`n x hidden_dim`).
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, reverse: bool) -> Result<Var> {
        self.forward_with_state(g, p, x, None, reverse)
    }

    /// As [`forward`](Self::forward) with explicit per-layer `(h0, c0)`.
    pub fn forward_with_state(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        init: Option<&[(Var, Var)]>,
        reverse: bool,
    ) -> Result<Var> {
        if g.value(x).cols() != self.input_dim {
            return Err(DsdError::Shape(format!(
                "lstm input has {} features, expected {}",
                g.value(x).cols(),
                self.input_dim
            )));
        }
        if let Some(s) = init {
            if s.len() != self.layers.len() {
                return Err(DsdError::Shape("one (h0, c0) pair per layer required".into()));
            }
        }
        let mut cur = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let (h0, c0) = match init {
                Some(s) => (Some(s[l].0), Some(s[l].1)),
                None => (None, None),
            };
            cur = g.lstm(
                cur,
                p.var(layer.wx),
                p.var(layer.wh),
                p.var(layer.b),
                h0,
                c0,
                reverse,
            )?;
        }
        Ok(cur)
    }

    pub fn zero_state(&self) -> LstmState {
        let n = self.layers.len();
        LstmState {
            h: vec![vec![0.0; self.hidden_dim]; n],
            c: vec![vec![0.0; self.hidden_dim]; n],
        }
    }

    /// Advances `state` by one input row and returns the top hidden state.
    pub fn step(&self, store: &ParamStore, x: &[f64], state: &mut LstmState) -> Vec<f64> {
        let h = self.hidden_dim;
        let mut input = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = store.get(layer.b).data().to_vec();
            kernels::vec_mat_acc(&input, store.get(layer.wx).data(), 4 * h, &mut z);
            let mut h_out = vec![0.0; h];
            let mut c_out = vec![0.0; h];
            kernels::lstm_cell(
                &mut z,
                &state.h[l],
                &state.c[l],
                store.get(layer.wh).data(),
                &mut h_out,
                &mut c_out,
            );
            state.h[l] = h_out.clone();
            state.c[l] = c_out;
            input = h_out;
        }
        input
    }
}
