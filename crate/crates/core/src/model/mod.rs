//! The factorized style model: stroke encoder, character-matrix generator,
//! temporal restorer and mixture-density decoder.

pub mod config;
pub mod decode;
pub mod mdn;
pub mod net;

pub use config::{DsdConfig, ParamCounts};
pub use decode::{DecodeOptions, Decoded};
pub use mdn::{bce, mdn_losses, mdn_nll, MdnStep, Targets};
pub use net::{
    mat_vec, mat_vec_graph, mean_writer_dsd, reconstruct_alpha, writer_candidates, DsdModel, ParamGroup,
};
