//! Bound-constrained limited-memory quasi-Newton minimisation.
//!
//! Active-set projected L-BFGS: variables held at a bound by the gradient
//! are frozen, the two-loop direction is taken on the rest, and a
//! backtracking Armijo search runs along the projected path.

use std::collections::VecDeque;

use crate::error::{DsdError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsbOptions {
    /// Stop when the projected-gradient infinity norm falls below this.
    pub pg_tol: f64,
    pub max_iters: usize,
    /// History length.
    pub memory: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        LbfgsbOptions {
            pg_tol: 1e-6,
            max_iters: 500,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Infinity norm of `P(x - g) - x` at the returned point.
    pub projected_grad_norm: f64,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over the box `[lower, upper]` from `x0`. `f` returns the
/// value and gradient.
pub fn minimize_box<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsbOptions) -> Result<LbfgsbResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(DsdError::Shape(format!("{n} variables, bounds {} and {}", lower.len(), upper.len())));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(DsdError::Invalid("lower bound above upper bound".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(DsdError::NonFinite {
            step: 0,
            detail: "objective at the starting point".into(),
        });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut pg = projected_grad_norm(&x, &g, lower, upper);

    while pg >= opts.pg_tol && iterations < opts.max_iters {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mask = |v: &mut Vec<f64>| {
            for (vi, &fr) in v.iter_mut().zip(&free) {
                if !fr {
                    *vi = 0.0;
                }
            }
        };

        // two-loop recursion on the free subspace
        let mut q = g.clone();
        mask(&mut q);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        mask(&mut d);
        if dot(&d, &g) >= 0.0 {
            // not a descent direction: restart from steepest descent
            history.clear();
            d = g.iter().map(|v| -v).collect();
            mask(&mut d);
        }
        let mut step = if history.is_empty() {
            1.0 / d.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut xn, lower, upper);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&g, &moved) {
                accepted = Some((xn, fn_, gn, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
        pg = projected_grad_norm(&x, &g, lower, upper);
    }
    Ok(LbfgsbResult {
        converged: pg < opts.pg_tol,
        x,
        f: fx,
        iterations,
        projected_grad_norm: pg,
    })
}
