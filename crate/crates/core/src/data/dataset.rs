//! Newline-delimited JSON sample records.
//!
//! ```text
//! {"writer_id":"w0","text":"hi","points":[[1.0,2.0,0],[3.0,0.5,1]],"eoc":[0,1]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stroke::{delta_encode, reorder_delayed_strokes, Point, StrokePoint, StrokeSequence};
use crate::error::{DsdError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Record {
    writer_id: String,
    text: String,
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eoc: Option<Vec<u8>>,
}

fn flag(v: f64, line: usize) -> Result<bool> {
    match v {
        x if x == 0.0 => Ok(false),
        x if x == 1.0 => Ok(true),
        _ => Err(DsdError::Parse {
            line,
            msg: format!("eos flag {v} is not 0 or 1"),
        }),
    }
}

impl Record {
    fn from_sample(s: &StrokeSequence) -> Self {
        Record {
            writer_id: s.writer_id.clone(),
            text: s.text.clone(),
            points: s
                .points
                .iter()
                .map(|p| [p.dx, p.dy, if p.eos { 1.0 } else { 0.0 }])
                .collect(),
            eoc: s.eoc.as_ref().map(|e| e.iter().map(|&b| u8::from(b)).collect()),
        }
    }

    fn into_sample(self, line: usize) -> Result<StrokeSequence> {
        let points = self
            .points
            .iter()
            .map(|&[dx, dy, e]| Ok(StrokePoint::new(dx, dy, flag(e, line)?)))
            .collect::<Result<Vec<_>>>()?;
        let eoc = match self.eoc {
            Some(v) => Some(
                v.into_iter()
                    .map(|b| flag(f64::from(b), line))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        StrokeSequence::new(self.writer_id, self.text, points, eoc).map_err(|e| DsdError::Parse {
            line,
            msg: e.to_string(),
        })
    }
}

/// What to do with a record that fails to parse or validate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OnInvalid {
    #[default]
    Skip,
    FailFast,
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub samples: Vec<StrokeSequence>,
    /// `(line, message)` for every skipped record.
    pub rejected: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

pub fn parse_dataset(text: &str, policy: OnInvalid) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Record>(raw)
            .map_err(|e| DsdError::Parse {
                line,
                msg: e.to_string(),
            })
            .and_then(|r| r.into_sample(line));
        match parsed {
            Ok(s) => report.samples.push(s),
            Err(e) if policy == OnInvalid::Skip => report.rejected.push((line, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if report.samples.is_empty() && report.rejected.is_empty() {
        report.warnings.push("dataset is empty".into());
    }
    Ok(report)
}

pub fn load_dataset(path: &Path, policy: OnInvalid) -> Result<LoadReport> {
    parse_dataset(&fs::read_to_string(path)?, policy)
}

pub fn to_ndjson(samples: &[StrokeSequence]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&Record::from_sample(s))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, samples: &[StrokeSequence]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_ndjson(samples)?.as_bytes())?;
    Ok(())
}

/// Absolute-coordinate export, one JSON object per line. `eoc`, if present,
/// mirrors the shape of `strokes`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbsoluteRecord {
    pub writer_id: String,
    pub text: String,
    pub strokes: Vec<Vec<Point>>,
    #[serde(default)]
    pub eoc: Option<Vec<Vec<u8>>>,
}

impl AbsoluteRecord {
    pub fn to_sample(&self, reorder: bool) -> Result<StrokeSequence> {
        let points = delta_encode(&self.strokes)?;
        let eoc = match &self.eoc {
            Some(e) => {
                let flat: Vec<bool> = e.iter().flatten().map(|&b| b != 0).collect();
                if flat.len() != points.len() + 1 {
                    return Err(DsdError::Invalid(format!(
                        "eoc has {} flags for {} points",
                        flat.len(),
                        points.len() + 1
                    )));
                }
                if flat[0] {
                    return Err(DsdError::Invalid("first point cannot end a character".into()));
                }
                Some(flat[1..].to_vec())
            }
            None => None,
        };
        let s = StrokeSequence::new(self.writer_id.clone(), self.text.clone(), points, eoc)?;
        if reorder {
            reorder_delayed_strokes(&s)
        } else {
            Ok(s)
        }
    }
}

/// Converts an absolute-coordinate export into samples.
pub fn ingest_absolute(reader: impl std::io::Read, reorder: bool, policy: OnInvalid) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (i, raw) in BufReader::new(reader).lines().enumerate() {
        let line = i + 1;
        let raw = raw?;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<AbsoluteRecord>(&raw)
            .map_err(DsdError::from)
            .and_then(|r| r.to_sample(reorder))
            .map_err(|e| DsdError::Parse {
                line,
                msg: e.to_string(),
            });
        match parsed {
            Ok(s) => report.samples.push(s),
            Err(e) if policy == OnInvalid::Skip => report.rejected.push((line, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if report.samples.is_empty() && report.rejected.is_empty() {
        report.warnings.push("input is empty".into());
    }
    Ok(report)
}
