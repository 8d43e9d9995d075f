//! Inference-time uses of a trained model.

pub mod audit;
pub mod database;
pub mod identify;
pub mod interp;
pub mod newchar;

pub use audit::{audit_invertibility, rank_info, AuditEntry, AuditReport, RankInfo, RANK_THRESHOLD};
pub use database::{
    cover, extraction_starts, sample_wcts, CoverSegment, DbEntry, DsdDatabase, RelinkCall, SampledWcts, SegmentSource,
};
pub use identify::{identify_writer, Codebook, Identification, Prediction, Query};
pub use interp::{bilinear_weights, interpolate_char_bilinear, interpolate_wcts, interpolate_writer};
pub use newchar::{direct_lsq, estimate_new_character, latent_lbfgsb, pair_residual, LatentEstimate, NewCharMode, Pair};

use rand::Rng;

use crate::error::Result;
use crate::model::{DecodeOptions, Decoded, DsdModel};

/// Samples strokes for `text` in the style captured by `db`.
pub fn generate(
    model: &DsdModel,
    db: &DsdDatabase,
    text: &str,
    writer_id: &str,
    rng: &mut impl Rng,
    opts: DecodeOptions,
) -> Result<(Decoded, SampledWcts)> {
    let sampled = sample_wcts(model, db, text)?;
    let decoded = model.decode_strokes(&sampled.wcts, text, writer_id, rng, opts)?;
    Ok((decoded, sampled))
}
