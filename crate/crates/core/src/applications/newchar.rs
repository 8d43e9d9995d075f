//! Character matrices for characters outside the training alphabet,
//! estimated from pairs `(w, w_new)` with `w_new ≈ C w`.

use nalgebra::DMatrix;

use crate::error::{DsdError, Result};
use crate::model::DsdModel;
use crate::numeric::{minimize_box, LbfgsbOptions, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewCharMode {
    /// `C = P Q⁺`, the minimum-norm least-squares solution.
    DirectLsq,
    /// Optimises the generator's latent input within `[-1, 1]`.
    LatentLbfgsb,
}

impl std::str::FromStr for NewCharMode {
    type Err = DsdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct_lsq" | "lsq" => Ok(NewCharMode::DirectLsq),
            "latent_lbfgsb" | "lbfgsb" => Ok(NewCharMode::LatentLbfgsb),
            other => Err(DsdError::Invalid(format!(
                "unknown mode {other:?} (expected direct_lsq or latent_lbfgsb)"
            ))),
        }
    }
}

/// `(w, w_new)` pairs.
pub type Pair = (Vec<f64>, Vec<f64>);

fn check_pairs(pairs: &[Pair]) -> Result<usize> {
    let l = pairs.first().ok_or_else(|| DsdError::Empty("pairs".into()))?.0.len();
    if l == 0 {
        return Err(DsdError::Empty("vectors".into()));
    }
    for (w, p) in pairs {
        if w.len() != l || p.len() != l {
            return Err(DsdError::Shape(format!("pair of lengths {} and {}; expected {l}", w.len(), p.len())));
        }
    }
    Ok(l)
}

fn columns(pairs: &[Pair], l: usize, second: bool) -> DMatrix<f64> {
    DMatrix::from_fn(l, pairs.len(), |i, j| if second { pairs[j].1[i] } else { pairs[j].0[i] })
}

/// `‖C Q − P‖_F²`.
pub fn pair_residual(c: &Tensor, pairs: &[Pair]) -> f64 {
    pairs
        .iter()
        .map(|(w, p)| {
            (0..c.rows())
                .map(|i| {
                    let cw: f64 = c.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    (cw - p[i]).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

pub fn direct_lsq(pairs: &[Pair]) -> Result<Tensor> {
    let l = check_pairs(pairs)?;
    let q = columns(pairs, l, false);
    let p = columns(pairs, l, true);
    let svd = q.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * (l.max(pairs.len()) as f64) * smax;
    let q_pinv = svd
        .pseudo_inverse(eps)
        .map_err(|e| DsdError::Invalid(format!("pseudo-inverse: {e}")))?;
    let c = p * q_pinv;
    Ok(Tensor::from_vec(l, l, (0..l).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| c[(i, j)]).collect()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentEstimate {
    pub c: Tensor,
    pub c_raw: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `‖FC2(c_raw) Q − P‖_F²` over `c_raw ∈ [-1, 1]^L`.
pub fn latent_lbfgsb(model: &DsdModel, pairs: &[Pair], opts: &LbfgsbOptions) -> Result<LatentEstimate> {
    let l = check_pairs(pairs)?;
    if l != model.latent() {
        return Err(DsdError::Shape(format!("pairs of length {l} for latent size {}", model.latent())));
    }
    let w = model.store.get(model.g_fc2.w);
    let b = model.store.get(model.g_fc2.b);
    let ll = l * l;
    let matrix = |raw: &[f64]| -> Vec<f64> {
        let mut c = b.data().to_vec();
        crate::numeric::kernels::vec_mat_acc(raw, w.data(), ll, &mut c);
        c
    };
    let objective = |raw: &[f64]| -> (f64, Vec<f64>) {
        let c = matrix(raw);
        let mut g_c = vec![0.0; ll];
        let mut f = 0.0;
        for (wv, pv) in pairs {
            for i in 0..l {
                let r: f64 = c[i * l..(i + 1) * l].iter().zip(wv).map(|(a, x)| a * x).sum::<f64>() - pv[i];
                f += r * r;
                for (gj, xj) in g_c[i * l..(i + 1) * l].iter_mut().zip(wv) {
                    *gj += 2.0 * r * xj;
                }
            }
        }
        let grad = (0..l)
            .map(|k| w.row(k).iter().zip(&g_c).map(|(a, g)| a * g).sum())
            .collect();
        (f, grad)
    };
    let r = minimize_box(objective, &vec![0.0; l], &vec![-1.0; l], &vec![1.0; l], opts)?;
    Ok(LatentEstimate {
        c: Tensor::from_vec(l, l, matrix(&r.x)),
        c_raw: r.x,
        objective: r.f,
        iterations: r.iterations,
        converged: r.converged,
    })
}

/// Estimates a character matrix. The latent mode needs the model and
/// fails when the optimiser stops short of convergence.
pub fn estimate_new_character(model: Option<&DsdModel>, pairs: &[Pair], mode: NewCharMode) -> Result<Tensor> {
    match mode {
        NewCharMode::DirectLsq => direct_lsq(pairs),
        NewCharMode::LatentLbfgsb => {
            let model = model.ok_or_else(|| DsdError::Invalid("latent_lbfgsb needs a trained model".into()))?;
            let est = latent_lbfgsb(model, pairs, &LbfgsbOptions::default())?;
            if est.converged {
                Ok(est.c)
            } else {
                Err(DsdError::NotConverged {
                    iterations: est.iterations,
                    objective: est.objective,
                })
            }
        }
    }
}
