//! Loss terms. The plain functions evaluate on values; the `_graph`
//! variants build the same quantities on the tape.

use crate::error::{DsdError, Result};
use crate::model::{bce, mdn_nll, MdnStep};
use crate::numeric::{Graph, Var};

/// Sum of per-step mixture NLLs.
pub fn loss_loc(steps: &[MdnStep], targets: &[(f64, f64)]) -> Result<f64> {
    same_len(steps.len(), targets.len())?;
    Ok(steps.iter().zip(targets).map(|(s, &t)| mdn_nll(s, t)).sum())
}

/// `(L_eos, L_eoc)`: binary cross-entropy summed over points.
pub fn loss_flags(steps: &[MdnStep], eos: &[bool], eoc: &[bool]) -> Result<(f64, f64)> {
    same_len(steps.len(), eos.len())?;
    same_len(steps.len(), eoc.len())?;
    let y = |b: bool| f64::from(u8::from(b));
    let le = steps.iter().zip(eos).map(|(s, &e)| bce(s.eos, y(e))).sum();
    let lc = steps.iter().zip(eoc).map(|(s, &e)| bce(s.eoc, y(e))).sum();
    Ok((le, lc))
}

/// `sum_t |mean - w_t|^2` over writer-DSD candidates.
pub fn loss_w_consistency(candidates: &[Vec<f64>]) -> Result<f64> {
    let first = candidates.first().ok_or_else(|| DsdError::Empty("candidates".into()))?;
    let l = first.len();
    let mut mean = vec![0.0; l];
    for c in candidates {
        same_len(c.len(), l)?;
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    let inv = 1.0 / candidates.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(candidates
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum())
}

/// `sum_t |w_t - w^A_t|^2`.
pub fn loss_wct_reconstruction(original: &[Vec<f64>], reconstructed: &[Vec<f64>]) -> Result<f64> {
    same_len(original.len(), reconstructed.len())?;
    let mut total = 0.0;
    for (a, b) in original.iter().zip(reconstructed) {
        same_len(a.len(), b.len())?;
        total += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    Ok(total)
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(DsdError::Shape(format!("length {a} vs {b}")))
    }
}

/// Tape version of [`loss_w_consistency`] over the rows of `candidates`.
pub fn w_consistency_graph(g: &mut Graph, candidates: Var) -> Result<Var> {
    let mean = g.mean_rows(candidates);
    let neg = g.neg(mean);
    let diff = g.add_row(candidates, neg)?;
    let sq = g.square(diff);
    Ok(g.sum(sq))
}

/// Tape version of [`loss_wct_reconstruction`] over matching rows.
pub fn wct_graph(g: &mut Graph, original: Var, reconstructed: Var) -> Result<Var> {
    let d = g.sub(original, reconstructed)?;
    let sq = g.square(d);
    Ok(g.sum(sq))
}
