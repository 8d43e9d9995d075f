//! Mixture density output head.
//!
//! Raw layout of one output row (`6K + 2` values):
//! `[pi K | mu_x K | mu_y K | log_sigma_x K | log_sigma_y K | rho K | eos | eoc]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::numeric::kernels::{log_sum_exp, sigmoid};
use crate::numeric::{Graph, Tensor, Var};

/// Floor on sigma inside the density.
pub const SIGMA_MIN: f64 = 1e-6;
/// Bound on |rho|.
pub const RHO_MAX: f64 = 1.0 - 1e-6;
/// Probability clip of the flag cross-entropies.
pub const BCE_EPS: f64 = 1e-7;

pub fn output_width(k: usize) -> usize {
    6 * k + 2
}

/// One decoder step after squashing.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnStep {
    pub pi: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub rho: Vec<f64>,
    pub eos: f64,
    pub eoc: f64,
}

impl MdnStep {
    pub fn from_raw(raw: &[f64], k: usize) -> Self {
        assert_eq!(raw.len(), output_width(k));
        let part = |i: usize| &raw[i * k..(i + 1) * k];
        let lse = log_sum_exp(part(0));
        let sigma = |v: &[f64]| v.iter().map(|&s| s.max(SIGMA_MIN.ln()).exp()).collect();
        MdnStep {
            pi: part(0).iter().map(|&z| (z - lse).exp()).collect(),
            mu_x: part(1).to_vec(),
            mu_y: part(2).to_vec(),
            sigma_x: sigma(part(3)),
            sigma_y: sigma(part(4)),
            rho: part(5).iter().map(|&r| r.tanh().clamp(-RHO_MAX, RHO_MAX)).collect(),
            eos: sigmoid(raw[6 * k]),
            eoc: sigmoid(raw[6 * k + 1]),
        }
    }

    pub fn num_components(&self) -> usize {
        self.pi.len()
    }

    /// Draws `(dx, dy)`. Temperature 0 takes the most probable component's
    /// mean; otherwise mixture logits are divided by `temperature` and
    /// standard deviations multiplied by its square root.
    pub fn sample(&self, rng: &mut impl Rng, temperature: f64) -> (f64, f64) {
        if temperature <= 0.0 {
            let j = argmax(&self.pi);
            return (self.mu_x[j], self.mu_y[j]);
        }
        let logits: Vec<f64> = self.pi.iter().map(|p| p.ln() / temperature).collect();
        let lse = log_sum_exp(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = self.pi.len() - 1;
        for (i, l) in logits.iter().enumerate() {
            acc += (l - lse).exp();
            if u < acc {
                j = i;
                break;
            }
        }
        let s = temperature.sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let r = self.rho[j];
        (
            self.mu_x[j] + s * self.sigma_x[j] * z1,
            self.mu_y[j] + s * self.sigma_y[j] * (r * z1 + (1.0 - r * r).sqrt() * z2),
        )
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Log density of a bivariate normal.
pub fn bivariate_log_density(x: f64, y: f64, mx: f64, my: f64, sx: f64, sy: f64, rho: f64) -> f64 {
    let zx = (x - mx) / sx;
    let zy = (y - my) / sy;
    let one_m = 1.0 - rho * rho;
    let z = zx * zx + zy * zy - 2.0 * rho * zx * zy;
    -(2.0 * std::f64::consts::PI).ln() - sx.ln() - sy.ln() - 0.5 * one_m.ln() - z / (2.0 * one_m)
}

/// Negative log-likelihood of `(dx, dy)` under the mixture.
pub fn mdn_nll(step: &MdnStep, target: (f64, f64)) -> f64 {
    let terms: Vec<f64> = (0..step.num_components())
        .map(|j| {
            step.pi[j].ln()
                + bivariate_log_density(
                    target.0,
                    target.1,
                    step.mu_x[j],
                    step.mu_y[j],
                    step.sigma_x[j].max(SIGMA_MIN),
                    step.sigma_y[j].max(SIGMA_MIN),
                    step.rho[j],
                )
        })
        .collect();
    -log_sum_exp(&terms)
}

/// Binary cross-entropy of `p` against a 0/1 target, with `p` clipped.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Teacher-forcing targets, already normalized.
#[derive(Clone, Debug)]
pub struct Targets {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub eos: Vec<f64>,
    pub eoc: Vec<f64>,
}

/// `(L_loc, L_eos, L_eoc)` for raw head outputs `out` (`N x (6K + 2)`).
pub fn mdn_losses(g: &mut Graph, out: Var, k: usize, t: &Targets) -> Result<(Var, Var, Var)> {
    let n = g.value(out).rows();
    let logit_pi = g.slice_cols(out, 0, k);
    let log_pi = g.log_softmax_rows(logit_pi);
    let mu_x = g.slice_cols(out, k, 2 * k);
    let mu_y = g.slice_cols(out, 2 * k, 3 * k);
    let ls_x_raw = g.slice_cols(out, 3 * k, 4 * k);
    let ls_y_raw = g.slice_cols(out, 4 * k, 5 * k);
    let ls_x = g.clamp(ls_x_raw, SIGMA_MIN.ln(), f64::INFINITY);
    let ls_y = g.clamp(ls_y_raw, SIGMA_MIN.ln(), f64::INFINITY);
    let rho_raw = g.slice_cols(out, 5 * k, 6 * k);
    let rho_t = g.tanh(rho_raw);
    let rho = g.clamp(rho_t, -RHO_MAX, RHO_MAX);

    let broadcast = |v: &[f64]| Tensor::from_vec(n, k, v.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect());
    let tx = g.constant(broadcast(&t.dx));
    let ty = g.constant(broadcast(&t.dy));

    let inv_sx = {
        let neg = g.neg(ls_x);
        g.exp(neg)
    };
    let inv_sy = {
        let neg = g.neg(ls_y);
        g.exp(neg)
    };
    let ex = g.sub(tx, mu_x)?;
    let zx = g.mul(ex, inv_sx)?;
    let ey = g.sub(ty, mu_y)?;
    let zy = g.mul(ey, inv_sy)?;
    let zx2 = g.square(zx);
    let zy2 = g.square(zy);
    let zxy = g.mul(zx, zy)?;
    let rzxy = g.mul(rho, zxy)?;
    let rzxy2 = g.scale(rzxy, 2.0);
    let s = g.add(zx2, zy2)?;
    let z = g.sub(s, rzxy2)?;
    let rho2 = g.square(rho);
    let neg_rho2 = g.neg(rho2);
    let one_m = g.add_scalar(neg_rho2, 1.0);
    let log_one_m = g.log(one_m);
    let two_one_m = g.scale(one_m, 2.0);
    let quad = g.div(z, two_one_m)?;

    let half_log = g.scale(log_one_m, 0.5);
    let a = g.add(ls_x, ls_y)?;
    let b = g.add(a, half_log)?;
    let c = g.add(b, quad)?;
    let neg_c = g.neg(c);
    let log_n = g.add_scalar(neg_c, -(2.0 * std::f64::consts::PI).ln());
    let joint = g.add(log_pi, log_n)?;
    let lse = g.log_sum_exp_rows(joint);
    let sum_lse = g.sum(lse);
    let loc = g.neg(sum_lse);

    let eos_logit = g.slice_cols(out, 6 * k, 6 * k + 1);
    let eoc_logit = g.slice_cols(out, 6 * k + 1, 6 * k + 2);
    let eos = bce_graph(g, eos_logit, &t.eos)?;
    let eoc = bce_graph(g, eoc_logit, &t.eoc)?;
    Ok((loc, eos, eoc))
}

fn bce_graph(g: &mut Graph, logit: Var, y: &[f64]) -> Result<Var> {
    let n = y.len();
    let p = g.sigmoid(logit);
    let pc = g.clamp(p, BCE_EPS, 1.0 - BCE_EPS);
    let lp = g.log(pc);
    let neg_pc = g.neg(pc);
    let q = g.add_scalar(neg_pc, 1.0);
    let lq = g.log(q);
    let yv = g.constant(Tensor::from_vec(n, 1, y.to_vec()));
    let ny = g.constant(Tensor::from_vec(n, 1, y.iter().map(|v| 1.0 - v).collect()));
    let a = g.mul(yv, lp)?;
    let b = g.mul(ny, lq)?;
    let s = g.add(a, b)?;
    let total = g.sum(s);
    Ok(g.neg(total))
}
