//! Loss terms, the multi-level objective and the training loop.

pub mod losses;
pub mod objective;
pub mod trainer;

pub use losses::{loss_flags, loss_loc, loss_w_consistency, loss_wct_reconstruction, w_consistency_graph, wct_graph};
pub use objective::{total_loss, total_loss_graph, Ablation, Level, LossBreakdown, LossGraph, LossKey, Method, Term};
pub use trainer::{loss_and_grads, train, LogRecord, TrainConfig, TrainOutputs, TrainReport};
