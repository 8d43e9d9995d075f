//! Alignment lattice without blank-to-blank transitions.
//!
//! States alternate character nodes with optional blank nodes placed between
//! consecutive characters. A blank is mandatory between repeated characters
//! and optional (flag) between distinct ones. Paths start on the first
//! character and end on the last; blanks never repeat and never self-loop.

use crate::error::{DsdError, Result};
use crate::numeric::kernels::{log_add, log_sum_exp};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeOptions {
    /// Permit a blank between two different characters.
    pub blank_between_distinct: bool,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            blank_between_distinct: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct State {
    /// Output class emitted by the node.
    class: usize,
    /// Character position this node is attributed to (blanks belong to the
    /// preceding character).
    char_pos: usize,
    is_blank: bool,
}

#[derive(Clone, Debug)]
pub struct SegLattice {
    states: Vec<State>,
    /// Predecessors of each state.
    preds: Vec<Vec<usize>>,
    num_chars: usize,
}

impl SegLattice {
    pub fn new(label: &[usize], blank: usize, opts: LatticeOptions) -> Result<Self> {
        if label.is_empty() {
            return Err(DsdError::Empty("label".into()));
        }
        if label.contains(&blank) {
            return Err(DsdError::Invalid("label contains the blank class".into()));
        }
        let mut states = Vec::with_capacity(2 * label.len());
        let mut preds: Vec<Vec<usize>> = Vec::with_capacity(2 * label.len());
        let mut prev_char: Option<usize> = None;
        for (i, &c) in label.iter().enumerate() {
            let mut char_preds = Vec::new();
            if let Some(pc) = prev_char {
                let repeated = label[i - 1] == c;
                if repeated || opts.blank_between_distinct {
                    let b = states.len();
                    states.push(State {
                        class: blank,
                        char_pos: i - 1,
                        is_blank: true,
                    });
                    preds.push(vec![pc]);
                    char_preds.push(b);
                }
                if !repeated {
                    char_preds.push(pc);
                }
            }
            let s = states.len();
            char_preds.push(s);
            char_preds.sort_unstable();
            states.push(State {
                class: c,
                char_pos: i,
                is_blank: false,
            });
            preds.push(char_preds);
            prev_char = Some(s);
        }
        Ok(SegLattice {
            states,
            preds,
            num_chars: label.len(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Expanded class sequence (characters with the blanks that exist).
    pub fn expanded(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.class).collect()
    }

    /// Shortest admissible path: one frame per character plus the mandatory
    /// blanks between repeats.
    pub fn min_len(&self) -> usize {
        let mut need = self.num_chars;
        for (i, s) in self.states.iter().enumerate() {
            if s.is_blank && !self.preds[i + 1].contains(&(i - 1)) {
                need += 1;
            }
        }
        need
    }

    fn check(&self, logp: &Tensor) -> Result<()> {
        let n = logp.rows();
        if n < self.min_len() {
            return Err(DsdError::TooShort {
                len: n,
                min: self.min_len(),
            });
        }
        if let Some(s) = self.states.iter().find(|s| s.class >= logp.cols()) {
            return Err(DsdError::Shape(format!(
                "class {} outside {} outputs",
                s.class,
                logp.cols()
            )));
        }
        Ok(())
    }

    /// Forward variables `alpha[t][s]` in log space.
    fn forward(&self, logp: &Tensor) -> Vec<Vec<f64>> {
        let (n, ns) = (logp.rows(), self.states.len());
        let mut alpha = vec![vec![f64::NEG_INFINITY; ns]; n];
        alpha[0][0] = logp.get(0, self.states[0].class);
        for t in 1..n {
            for s in 0..ns {
                let acc = self.preds[s]
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &p| log_add(a, alpha[t - 1][p]));
                if acc > f64::NEG_INFINITY {
                    alpha[t][s] = acc + logp.get(t, self.states[s].class);
                }
            }
        }
        alpha
    }

    fn backward(&self, logp: &Tensor) -> Vec<Vec<f64>> {
        let (n, ns) = (logp.rows(), self.states.len());
        let mut beta = vec![vec![f64::NEG_INFINITY; ns]; n];
        beta[n - 1][ns - 1] = 0.0;
        for t in (0..n - 1).rev() {
            for s in 0..ns {
                let b = beta[t + 1][s] + logp.get(t + 1, self.states[s].class);
                if b > f64::NEG_INFINITY {
                    for &p in &self.preds[s] {
                        beta[t][p] = log_add(beta[t][p], b);
                    }
                }
            }
        }
        beta
    }

    /// Log of the total path probability under per-frame log-probabilities.
    pub fn log_likelihood(&self, logp: &Tensor) -> Result<f64> {
        self.check(logp)?;
        let alpha = self.forward(logp);
        Ok(alpha[logp.rows() - 1][self.states.len() - 1])
    }

    /// Negative log-likelihood and its gradient with respect to `logp`.
    pub fn nll_and_grad(&self, logp: &Tensor) -> Result<(f64, Tensor)> {
        self.check(logp)?;
        let alpha = self.forward(logp);
        let beta = self.backward(logp);
        let n = logp.rows();
        let log_z = alpha[n - 1][self.states.len() - 1];
        if !log_z.is_finite() {
            return Err(DsdError::Invalid("no admissible path has nonzero probability".into()));
        }
        let mut grad = Tensor::zeros(n, logp.cols());
        for t in 0..n {
            for (s, st) in self.states.iter().enumerate() {
                let lp = alpha[t][s] + beta[t][s] - log_z;
                if lp > f64::NEG_INFINITY {
                    let v = grad.get(t, st.class) - lp.exp();
                    grad.set(t, st.class, v);
                }
            }
        }
        Ok((-log_z, grad))
    }

    /// Best path. Returns the per-frame state indices and its log-probability.
    fn viterbi(&self, logp: &Tensor) -> Result<(Vec<usize>, f64)> {
        self.check(logp)?;
        let (n, ns) = (logp.rows(), self.states.len());
        let mut score = vec![vec![f64::NEG_INFINITY; ns]; n];
        let mut back = vec![vec![usize::MAX; ns]; n];
        score[0][0] = logp.get(0, self.states[0].class);
        for t in 1..n {
            for s in 0..ns {
                // ties resolve to the lowest predecessor index
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for &p in &self.preds[s] {
                    if score[t - 1][p] > best.0 {
                        best = (score[t - 1][p], p);
                    }
                }
                if best.1 != usize::MAX {
                    score[t][s] = best.0 + logp.get(t, self.states[s].class);
                    back[t][s] = best.1;
                }
            }
        }
        let total = score[n - 1][ns - 1];
        if total == f64::NEG_INFINITY {
            return Err(DsdError::Invalid("no admissible path has nonzero probability".into()));
        }
        let mut path = vec![0; n];
        path[n - 1] = ns - 1;
        for t in (1..n).rev() {
            path[t - 1] = back[t][path[t]];
        }
        Ok((path, total))
    }

    pub fn decode(&self, logp: &Tensor) -> Result<Alignment> {
        let (path, log_prob) = self.viterbi(logp)?;
        let char_index: Vec<usize> = path.iter().map(|&s| self.states[s].char_pos).collect();
        Ok(Alignment::from_char_index(char_index, log_prob))
    }
}

/// Per-point character attribution of a decoded path.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub char_index: Vec<usize>,
    pub eoc: Vec<bool>,
    /// Log-probability of the decoded path.
    pub log_prob: f64,
}

impl Alignment {
    fn from_char_index(char_index: Vec<usize>, log_prob: f64) -> Self {
        let n = char_index.len();
        let eoc = (0..n)
            .map(|t| t + 1 == n || char_index[t + 1] != char_index[t])
            .collect();
        Alignment {
            char_index,
            eoc,
            log_prob,
        }
    }

    pub fn validate(&self, num_chars: usize) -> Result<()> {
        let ci = &self.char_index;
        let ok = !ci.is_empty()
            && ci[0] == 0
            && ci[ci.len() - 1] + 1 == num_chars
            && ci.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
            && self.eoc.iter().filter(|&&e| e).count() == num_chars;
        if ok {
            Ok(())
        } else {
            Err(DsdError::Invalid("alignment violates monotonicity".into()))
        }
    }
}

/// Row-wise log-softmax of raw logits.
pub fn log_softmax(logits: &Tensor) -> Tensor {
    let (r, c) = logits.dims();
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        let lse = log_sum_exp(logits.row(i));
        for (o, &x) in out.row_mut(i).iter_mut().zip(logits.row(i)) {
            *o = x - lse;
        }
    }
    out
}

/// Lattice loss on raw logits, with its gradient with respect to the logits.
pub fn seg_ctc_loss(logits: &Tensor, label: &[usize], blank: usize, opts: LatticeOptions) -> Result<(f64, Tensor)> {
    let lat = SegLattice::new(label, blank, opts)?;
    let logp = log_softmax(logits);
    let (loss, g_logp) = lat.nll_and_grad(&logp)?;
    // d/dz of log_softmax: g - softmax * sum(g)
    let (r, c) = logits.dims();
    let mut grad = Tensor::zeros(r, c);
    for i in 0..r {
        let s: f64 = g_logp.row(i).iter().sum();
        for j in 0..c {
            grad.set(i, j, g_logp.get(i, j) - logp.get(i, j).exp() * s);
        }
    }
    Ok((loss, grad))
}

/// Best-path alignment of `label` under raw logits.
pub fn decode_alignment(logits: &Tensor, label: &[usize], blank: usize, opts: LatticeOptions) -> Result<Alignment> {
    SegLattice::new(label, blank, opts)?.decode(&log_softmax(logits))
}
