//! Stroke and text representations, dataset records and a synthetic corpus.

pub mod alphabet;
pub mod dataset;
pub mod stroke;
pub mod synth;

pub use alphabet::{one_hot_encode, Alphabet, CharacterSequence};
pub use dataset::{ingest_absolute, load_dataset, parse_dataset, save_dataset, to_ndjson, AbsoluteRecord, LoadReport, OnInvalid};
pub use stroke::{delta_decode, delta_encode, reorder_delayed_strokes, Point, StrokePoint, StrokeSequence};
pub use synth::{random_letter_corpus, synth_corpus, SyntheticWriterStyle};

/// Standard deviation of all `dx` and `dy` values, for input normalization.
pub fn delta_std(samples: &[StrokeSequence]) -> f64 {
    let vals: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.points.iter().flat_map(|p| [p.dx, p.dy]))
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}

/// Divides every delta by `factor`.
pub fn scale_deltas(sample: &StrokeSequence, factor: f64) -> StrokeSequence {
    let mut s = sample.clone();
    for p in &mut s.points {
        p.dx /= factor;
        p.dy /= factor;
    }
    s
}
