//! Substring database of writer-character DSDs and the greedy cover
//! sampler that builds conditioning sequences for new text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::StrokeSequence;
use crate::error::{DsdError, Result};
use crate::model::{mat_vec, writer_candidates, DsdModel};

/// One stored array `[w_{c_1}, .., w_{c_t}]` for the substring `key`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbEntry {
    pub key: String,
    pub wcts: Vec<Vec<f64>>,
    /// Index of the source sample in the build input.
    pub sample: usize,
    /// Character offset of the substring in that sample.
    pub start: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DsdDatabase {
    /// The first array extracted for each key.
    pub entries: BTreeMap<String, DbEntry>,
    /// Mean writer DSD over every extracted `w_{c_t}`.
    pub mean_w: Vec<f64>,
    /// Skipped regions, such as singular character matrices.
    pub warnings: Vec<String>,
}

/// Character positions at which an extraction may start: the first
/// character and every character preceded by a pen lift.
pub fn extraction_starts(x: &StrokeSequence) -> Result<Vec<usize>> {
    let spans = x.char_spans()?;
    let mut starts = vec![0];
    for i in 1..spans.len() {
        // cursive iff no eos=1 point separates the two characters
        if x.points[spans[i - 1].1 - 1].eos {
            starts.push(i);
        }
    }
    Ok(starts)
}

impl DsdDatabase {
    pub fn build(model: &DsdModel, samples: &[StrokeSequence]) -> Result<Self> {
        if samples.is_empty() {
            return Err(DsdError::Empty("reference samples".into()));
        }
        let mut db = DsdDatabase::default();
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        for (si, x) in samples.iter().enumerate() {
            if x.eoc.is_none() {
                return Err(DsdError::Invalid(format!(
                    "reference sample {si} ({:?}) has no eoc labels; segment it first",
                    x.text
                )));
            }
            let chars: Vec<char> = x.text.chars().collect();
            let m = chars.len();
            for start in extraction_starts(x)? {
                let crop = x.crop_chars(start, m)?;
                let wcts = model.encode_strokes(&crop)?;
                let cs = model.char_dsd(&crop.text)?;
                // arrays stop before the first singular prefix
                let mut usable = 0;
                for t in 0..wcts.len() {
                    match writer_candidates(&wcts[t..=t], &cs[t..=t]) {
                        Ok(mut c) => {
                            candidates.push(c.pop().expect("one candidate"));
                            usable += 1;
                        }
                        Err(DsdError::SingularAt { .. }) => {
                            let key: String = chars[start..=start + t].iter().collect();
                            db.warnings
                                .push(format!("sample {si}: singular character matrix for {key:?}; skipped"));
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                for len in 1..=usable {
                    let key: String = chars[start..start + len].iter().collect();
                    db.entries.entry(key.clone()).or_insert_with(|| DbEntry {
                        key,
                        wcts: wcts[..len].to_vec(),
                        sample: si,
                        start,
                    });
                }
            }
        }
        if candidates.is_empty() {
            return Err(DsdError::Empty("no usable writer-character DSDs".into()));
        }
        let l = candidates[0].len();
        let mut mean = vec![0.0; l];
        for c in &candidates {
            mean.iter_mut().zip(c).for_each(|(m, v)| *m += v);
        }
        let inv = 1.0 / candidates.len() as f64;
        db.mean_w = mean.into_iter().map(|v| v * inv).collect();
        Ok(db)
    }

    /// A database holding only a mean writer DSD; sampling then uses the
    /// fallback for every character.
    pub fn from_mean(mean_w: Vec<f64>) -> Self {
        DsdDatabase {
            mean_w,
            ..DsdDatabase::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// How a run of target characters is conditioned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentSource {
    /// A stored array under this key.
    Stored(String),
    /// `C_c w̄` for a single character.
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverSegment {
    /// Character range `[start, end)` in the target.
    pub start: usize,
    pub end: usize,
    pub source: SegmentSource,
}

/// One restorer call: labels of the DSDs fed in, in order. Stored array
/// elements are labelled by their key prefix, fallbacks by their character.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelinkCall {
    pub inputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledWcts {
    /// One conditioning vector per target character.
    pub wcts: Vec<Vec<f64>>,
    /// Cover in target order.
    pub segments: Vec<CoverSegment>,
    pub trace: Vec<RelinkCall>,
}

/// Greedy cover of `target` by database keys: longest substrings first,
/// ties by leftmost position, each accepted only if none of its
/// characters is covered yet.
pub fn cover(db: &DsdDatabase, target: &[char]) -> Vec<CoverSegment> {
    let m = target.len();
    let mut covered = vec![false; m];
    let mut segs = Vec::new();
    for len in (1..=m).rev() {
        for start in 0..=m - len {
            if covered[start..start + len].iter().any(|&c| c) {
                continue;
            }
            let key: String = target[start..start + len].iter().collect();
            if db.entries.contains_key(&key) {
                covered[start..start + len].iter_mut().for_each(|c| *c = true);
                segs.push(CoverSegment {
                    start,
                    end: start + len,
                    source: SegmentSource::Stored(key),
                });
            }
        }
    }
    for (i, c) in covered.iter().enumerate() {
        if !c {
            segs.push(CoverSegment {
                start: i,
                end: i + 1,
                source: SegmentSource::Fallback,
            });
        }
    }
    segs.sort_by_key(|s| s.start);
    segs
}

/// Conditioning sequence for `target`. Each element is re-linked by the
/// restorer over the reference set built so far; a stored array joins the
/// reference set only through its last element, since its characters are
/// already temporally dependent.
pub fn sample_wcts(model: &DsdModel, db: &DsdDatabase, target: &str) -> Result<SampledWcts> {
    let indices = model.char_indices(target)?;
    if db.mean_w.len() != model.latent() {
        return Err(DsdError::Shape(format!(
            "database latent size {} vs model {}",
            db.mean_w.len(),
            model.latent()
        )));
    }
    let chars: Vec<char> = target.chars().collect();
    let segments = cover(db, &chars);

    let mut refs: Vec<Vec<f64>> = Vec::new();
    let mut ref_labels: Vec<String> = Vec::new();
    let mut wcts = Vec::with_capacity(chars.len());
    let mut trace = Vec::with_capacity(chars.len());
    for seg in &segments {
        let (array, labels): (Vec<Vec<f64>>, Vec<String>) = match &seg.source {
            SegmentSource::Stored(key) => {
                let e = &db.entries[key];
                let labels = (1..=e.wcts.len()).map(|n| key.chars().take(n).collect()).collect();
                (e.wcts.clone(), labels)
            }
            SegmentSource::Fallback => {
                let c = &model.char_dsd_indices(&indices[seg.start..=seg.start])[0];
                (vec![mat_vec(c, &db.mean_w)], vec![chars[seg.start].to_string()])
            }
        };
        for (w, label) in array.iter().zip(&labels) {
            let mut input = refs.clone();
            input.push(w.clone());
            let mut names = ref_labels.clone();
            names.push(label.clone());
            wcts.push(model.reconstruct_beta(&input)?);
            trace.push(RelinkCall { inputs: names });
        }
        refs.push(array.last().expect("nonempty array").clone());
        ref_labels.push(labels.last().expect("nonempty labels").clone());
    }
    Ok(SampledWcts { wcts, segments, trace })
}
