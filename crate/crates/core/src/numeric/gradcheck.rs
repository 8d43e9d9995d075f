//! Central-difference gradient checking.

use super::graph::{Graph, Var};
use super::params::{Bound, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }

    fn build(analytic: Vec<f64>, numeric: Vec<f64>, tol: f64, floor: f64) -> Self {
        let mut max_abs_err = 0.0f64;
        let mut max_rel_err = 0.0f64;
        for (a, n) in analytic.iter().zip(&numeric) {
            let abs = (a - n).abs();
            max_abs_err = max_abs_err.max(abs);
            max_rel_err = max_rel_err.max(abs / a.abs().max(n.abs()).max(floor));
        }
        GradCheckReport {
            analytic,
            numeric,
            max_abs_err,
            max_rel_err,
            tol,
        }
    }
}

/// Relative errors are `|a - n| / max(|a|, |n|, floor)`. Central-difference
/// round-off near `h = 1e-5` is about `1e-11 |f|`; the floor keeps exactly-zero
/// gradient entries from turning that noise into a large relative error.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of the scalar function `f` at `point`
/// against central differences with step `h`.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&mut g, x)?;
    let grads = g.backward(y);
    let analytic = grads
        .get(x)
        .map_or_else(|| vec![0.0; point.len()], |t| t.data().to_vec());

    let eval = |p: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(p);
        let y = f(&mut g, x)?;
        Ok(g.value(y).item())
    };
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }
    Ok(GradCheckReport::build(analytic, numeric, tol, REL_FLOOR))
}

/// Gradient check of a loss built from a whole [`ParamStore`], restricted
/// to the listed `(parameter, flat index)` coordinates.
pub fn grad_check_store<F>(
    store: &ParamStore,
    f: F,
    coords: &[(ParamId, usize)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = store.bind(&mut g, true);
    let y = f(&mut g, &bound)?;
    let grads = g.backward(y);
    let analytic = coords
        .iter()
        .map(|&(id, i)| grads.get(bound.var(id)).map_or(0.0, |t| t.data()[i]))
        .collect();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let bound = s.bind(&mut g, false);
        let y = f(&mut g, &bound)?;
        Ok(g.value(y).item())
    };
    let mut work = store.clone();
    let mut numeric = Vec::with_capacity(coords.len());
    for &(id, i) in coords {
        let orig = work.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + h;
        let fp = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig - h;
        let fm = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        numeric.push((fp - fm) / (2.0 * h));
    }
    Ok(GradCheckReport::build(analytic, numeric, tol, REL_FLOOR))
}
