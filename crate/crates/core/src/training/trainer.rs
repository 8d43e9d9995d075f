use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{total_loss_graph, Ablation, LossBreakdown};
use crate::data::{save_dataset, StrokeSequence};
use crate::error::{DsdError, Result};
use crate::model::DsdModel;
use crate::numeric::{Graph, OptimizerState, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Elementwise gradient clip.
    pub clip: (f64, f64),
    /// Sentence samples per step; word and character views are derived.
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// 0 disables periodic checkpoints; the final model is always written.
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            clip: (-10.0, 10.0),
            batch_size: 5,
            steps: 2000,
            seed: 0,
            checkpoint_every: 500,
            log_every: 10,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DsdError::Invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.clip.0 < self.clip.1) {
            return Err(DsdError::Invalid(format!("clip range {:?} is empty", self.clip)));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(DsdError::Invalid("batch_size and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log. Contains no timing so that logs are
/// reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    /// Total loss of this step's batch.
    pub total: f64,
    /// Mean batch total over the steps since the previous record.
    pub window_mean: f64,
    /// Enabled components keyed `level.method.term`.
    pub terms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TimingRecord {
    step: usize,
    wall_seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub log: Vec<LogRecord>,
    /// Total per step, in order.
    pub trace: Vec<f64>,
    pub wall_seconds: f64,
}

/// Objective value and gradient for every parameter tensor, in store order.
pub fn loss_and_grads(
    model: &DsdModel,
    batch: &[StrokeSequence],
    ablation: &Ablation,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut g = Graph::new();
    let p = model.store.bind(&mut g, true);
    let lg = total_loss_graph(model, &mut g, &p, batch, ablation)?;
    let breakdown = lg.breakdown(&g);
    let mut grads = g.backward(lg.total);
    let out = p
        .vars()
        .iter()
        .zip(model.store.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    Ok((breakdown, out))
}

/// Files written under the output directory.
pub struct TrainOutputs {
    pub dir: PathBuf,
}

impl TrainOutputs {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join("train_log.ndjson")
    }
    pub fn timing_path(&self) -> PathBuf {
        self.dir.join("timing.ndjson")
    }
    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("step-{step:07}"))
    }
    pub fn final_path(&self) -> PathBuf {
        self.dir.join("final")
    }
    pub fn nan_dump_path(&self) -> PathBuf {
        self.dir.join("nan_batch.ndjson")
    }
}

/// Adam training over random batches of `data`. With `out`, writes the log,
/// a timing sidecar, periodic checkpoints and the final model there.
pub fn train(
    model: &mut DsdModel,
    data: &[StrokeSequence],
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DsdError::Empty("training data".into()));
    }
    for (i, x) in data.iter().enumerate() {
        if x.eoc.is_none() {
            return Err(DsdError::Invalid(format!("sample {i} ({:?}) has no eoc labels", x.text)));
        }
        model.char_indices(&x.text)?;
    }
    let outputs = out.map(|d| TrainOutputs { dir: d.to_path_buf() });
    let mut log_file = None;
    let mut timing_file = None;
    if let Some(o) = &outputs {
        fs::create_dir_all(&o.dir)?;
        log_file = Some(fs::File::create(o.log_path())?);
        timing_file = Some(fs::File::create(o.timing_path())?);
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(model.store.tensors(), cfg.learning_rate, cfg.clip)?;
    let mut report = TrainReport::default();
    let mut window = 0.0;
    let mut window_len = 0usize;

    for step in 1..=cfg.steps {
        let batch: Vec<StrokeSequence> = (0..cfg.batch_size)
            .map(|_| data.choose(&mut rng).expect("nonempty").clone())
            .collect();
        let (bd, grads) = loss_and_grads(model, &batch, &cfg.ablation)?;
        if !bd.total.is_finite() || grads.iter().any(|t| !t.is_finite()) {
            let mut detail = format!(
                "loss {} on batch [{}]",
                bd.total,
                batch
                    .iter()
                    .map(|x| format!("{}:{:?}", x.writer_id, x.text))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            if let Some(o) = &outputs {
                save_dataset(&o.nan_dump_path(), &batch)?;
                detail.push_str(&format!("; batch written to {}", o.nan_dump_path().display()));
            }
            return Err(DsdError::NonFinite { step, detail });
        }
        opt.step(model.store.tensors_mut(), &grads)?;
        report.trace.push(bd.total);
        window += bd.total;
        window_len += 1;

        if step % cfg.log_every == 0 || step == cfg.steps {
            let rec = LogRecord {
                step,
                total: bd.total,
                window_mean: window / window_len as f64,
                terms: bd.terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            };
            window = 0.0;
            window_len = 0;
            if let Some(f) = &mut log_file {
                writeln!(f, "{}", serde_json::to_string(&rec)?)?;
            }
            if let Some(f) = &mut timing_file {
                let t = TimingRecord {
                    step,
                    wall_seconds: start.elapsed().as_secs_f64(),
                };
                writeln!(f, "{}", serde_json::to_string(&t)?)?;
            }
            report.log.push(rec);
        }
        if let Some(o) = &outputs {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                model.save(&o.checkpoint_path(step))?;
            }
        }
    }
    if let Some(o) = &outputs {
        model.save(&o.final_path())?;
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}
