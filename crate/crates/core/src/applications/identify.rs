//! Writer identification by nearest mean writer DSD.

use serde::{Deserialize, Serialize};

use crate::data::StrokeSequence;
use crate::error::{DsdError, Result};
use crate::model::{writer_candidates, DsdModel};

/// Enrolled writers and their mean writer DSDs, in enrollment order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub writers: Vec<String>,
    pub dsds: Vec<Vec<f64>>,
}

impl Codebook {
    /// One entry per distinct `writer_id`, ordered by first appearance. Each
    /// entry averages `C⁻¹ w` over every character of that writer's samples.
    pub fn enroll(model: &DsdModel, samples: &[StrokeSequence]) -> Result<Self> {
        if samples.is_empty() {
            return Err(DsdError::Empty("enrollment samples".into()));
        }
        let mut writers: Vec<String> = Vec::new();
        let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
        for x in samples {
            let w = model.encode_strokes(x)?;
            let cs = model.char_dsd(&x.text)?;
            let cands = writer_candidates(&w, &cs)?;
            let k = match writers.iter().position(|id| *id == x.writer_id) {
                Some(k) => k,
                None => {
                    writers.push(x.writer_id.clone());
                    sums.push((vec![0.0; model.latent()], 0));
                    writers.len() - 1
                }
            };
            for c in &cands {
                sums[k].0.iter_mut().zip(c).for_each(|(s, v)| *s += v);
            }
            sums[k].1 += cands.len();
        }
        let dsds = sums
            .into_iter()
            .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        Ok(Codebook { writers, dsds })
    }

    pub fn len(&self) -> usize {
        self.writers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.writers.is_empty()
    }

    /// Index of the closest entry; ties go to the lowest index.
    pub fn nearest(&self, w: &[f64]) -> Result<usize> {
        if self.is_empty() {
            return Err(DsdError::Empty("codebook".into()));
        }
        let mut best = (0, f64::INFINITY);
        for (j, d) in self.dsds.iter().enumerate() {
            if d.len() != w.len() {
                return Err(DsdError::Shape(format!("codebook vector {} vs query {}", d.len(), w.len())));
            }
            let dist: f64 = d.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < best.1 {
                best = (j, dist);
            }
        }
        Ok(best.0)
    }

    /// Per-word nearest entries averaged as one-hot votes; the argmax wins,
    /// ties to the lowest index. Returns the winner and the vote shares.
    pub fn vote(&self, word_dsds: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
        if word_dsds.is_empty() {
            return Err(DsdError::Empty("query words".into()));
        }
        let mut votes = vec![0.0; self.len()];
        for w in word_dsds {
            votes[self.nearest(w)?] += 1.0;
        }
        let n = word_dsds.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        let mut best = 0;
        for (j, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = j;
            }
        }
        Ok((best, votes))
    }
}

/// A set of words believed to come from one writer.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    /// True writer, when known.
    pub label: Option<String>,
    pub words: Vec<StrokeSequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub writer: String,
    pub votes: Vec<f64>,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub predictions: Vec<Prediction>,
    /// Fraction of labelled queries predicted correctly.
    pub accuracy: Option<f64>,
}

pub fn identify_writer(model: &DsdModel, codebook: &Codebook, queries: &[Query]) -> Result<Identification> {
    if codebook.is_empty() {
        return Err(DsdError::Empty("codebook".into()));
    }
    let mut predictions = Vec::with_capacity(queries.len());
    for q in queries {
        let dsds = q.words.iter().map(|x| model.writer_dsd(x)).collect::<Result<Vec<_>>>()?;
        let (j, votes) = codebook.vote(&dsds)?;
        predictions.push(Prediction {
            writer: codebook.writers[j].clone(),
            votes,
            label: q.label.clone(),
        });
    }
    let labelled: Vec<&Prediction> = predictions.iter().filter(|p| p.label.is_some()).collect();
    let accuracy = (!labelled.is_empty()).then(|| {
        labelled.iter().filter(|p| p.label.as_deref() == Some(p.writer.as_str())).count() as f64
            / labelled.len() as f64
    });
    Ok(Identification { predictions, accuracy })
}
