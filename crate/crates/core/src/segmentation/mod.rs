//! Unsupervised stroke-to-character alignment.

pub mod features;
pub mod lattice;
pub mod net;

pub use features::{extract_features, NUM_FEATURES};
pub use lattice::{decode_alignment, seg_ctc_loss, Alignment, LatticeOptions, SegLattice};
pub use net::{train_segmenter, SegNet, SegNetConfig, SegTrainConfig};
