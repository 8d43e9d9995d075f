//! Rank audit of generated character matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsdError, Result};
use crate::model::DsdModel;
use crate::numeric::Tensor;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl RankInfo {
    pub fn full_rank(&self, n: usize) -> bool {
        self.rank == n
    }

    /// `σ_max / σ_min`; infinite for a singular matrix.
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }
}

pub fn rank_info(c: &Tensor) -> RankInfo {
    let (r, k) = c.dims();
    let m = nalgebra::DMatrix::from_row_slice(r, k, c.data());
    let sv = m.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let rank = sv.iter().filter(|&&s| s > RANK_THRESHOLD * sigma_max).count();
    RankInfo {
        rank,
        sigma_min,
        sigma_max,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub text: String,
    pub rank: usize,
    pub condition: f64,
    pub full_rank: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub singular: Vec<String>,
    /// Largest condition number among full-rank matrices.
    pub worst_condition: f64,
}

/// Audits `C` for every string up to length 2 over the model alphabet and
/// `sampled_per_len` random strings of each longer length up to `max_len`.
pub fn audit_invertibility(model: &DsdModel, max_len: usize, sampled_per_len: usize, seed: u64) -> Result<AuditReport> {
    if max_len == 0 {
        return Err(DsdError::Invalid("max_len must be at least 1".into()));
    }
    let q = model.alphabet().num_chars();
    let l = model.latent();
    let mut strings: Vec<Vec<usize>> = Vec::new();
    strings.extend((0..q).map(|a| vec![a]));
    if max_len >= 2 {
        strings.extend((0..q).flat_map(|a| (0..q).map(move |b| vec![a, b])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for len in 3..=max_len {
        for _ in 0..sampled_per_len {
            strings.push((0..len).map(|_| rng.random_range(0..q)).collect());
        }
    }
    let chars = model.alphabet().chars();
    let mut report = AuditReport {
        entries: Vec::with_capacity(strings.len()),
        singular: Vec::new(),
        worst_condition: 0.0,
    };
    for s in &strings {
        let c = model.char_dsd_indices(s).pop().expect("nonempty string");
        let info = rank_info(&c);
        let text: String = s.iter().map(|&i| chars[i]).collect();
        let full = info.full_rank(l);
        if full {
            report.worst_condition = report.worst_condition.max(info.condition());
        } else {
            report.singular.push(text.clone());
        }
        report.entries.push(AuditEntry {
            text,
            rank: info.rank,
            condition: info.condition(),
            full_rank: full,
        });
    }
    Ok(report)
}
