use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{extract_features, NUM_FEATURES};
use super::lattice::{decode_alignment, log_softmax, seg_ctc_loss, Alignment, LatticeOptions};
use crate::data::{Alphabet, StrokeSequence};
use crate::error::{DsdError, Result};
use crate::numeric::checkpoint;
use crate::numeric::{Affine, Bound, Graph, LstmParams, OptimizerState, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct SegNetConfig {
    pub hidden: usize,
    pub layers: usize,
    pub lattice: LatticeOptions,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            hidden: 128,
            layers: 3,
            lattice: LatticeOptions::default(),
        }
    }
}

/// Bidirectional LSTM stack followed by a per-point affine classifier.
#[derive(Clone, Debug)]
pub struct SegNet {
    pub config: SegNetConfig,
    pub alphabet: Alphabet,
    pub store: ParamStore,
    layers: Vec<(LstmParams, LstmParams)>,
    head: Affine,
}

impl SegNet {
    pub fn new(config: SegNetConfig, alphabet: Alphabet, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| {
                let d = if l == 0 { NUM_FEATURES } else { 2 * h };
                (
                    LstmParams::new(&mut store, &mut rng, &format!("seg.l{l}.fwd"), d, h, 1),
                    LstmParams::new(&mut store, &mut rng, &format!("seg.l{l}.bwd"), d, h, 1),
                )
            })
            .collect();
        let head = Affine::new(&mut store, &mut rng, "seg.head", 2 * h, alphabet.size());
        SegNet {
            config,
            alphabet,
            store,
            layers,
            head,
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Raw per-point logits (`N x Q`).
    pub fn logits(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<Var> {
        let mut x = features;
        for (fwd, bwd) in &self.layers {
            let a = fwd.forward(g, p, x, false)?;
            let b = bwd.forward(g, p, x, true)?;
            x = g.concat_cols(&[a, b])?;
        }
        self.head.forward(g, p, x)
    }

    fn label(&self, text: &str) -> Result<Vec<usize>> {
        self.alphabet.indices(text)
    }

    /// Lattice loss of one sample and the parameter gradients.
    pub fn loss_and_grads(&self, sample: &StrokeSequence) -> Result<(f64, Vec<Tensor>)> {
        self.grads_with(sample, |z, label, blank, opts| seg_ctc_loss(z, label, blank, opts))
    }

    /// Flat-start objective: cross-entropy against the lattice posterior
    /// under uniform emissions. Depends only on the label and the length.
    pub fn flat_start_loss_and_grads(&self, sample: &StrokeSequence) -> Result<(f64, Vec<Tensor>)> {
        self.grads_with(sample, |z, label, blank, opts| {
            let (n, q) = z.dims();
            let (_, g0) = seg_ctc_loss(&Tensor::zeros(n, q), label, blank, opts)?;
            // d(-log P)/dz = softmax(z) - posterior, softmax(0) = 1/q
            let posterior = g0.map(|v| 1.0 / q as f64 - v);
            let logp = log_softmax(z);
            let loss = -posterior.data().iter().zip(logp.data()).map(|(a, b)| a * b).sum::<f64>();
            let mut grad = logp.map(f64::exp);
            grad.sub_assign(&posterior);
            Ok((loss, grad))
        })
    }

    fn grads_with(
        &self,
        sample: &StrokeSequence,
        objective: impl Fn(&Tensor, &[usize], usize, LatticeOptions) -> Result<(f64, Tensor)>,
    ) -> Result<(f64, Vec<Tensor>)> {
        let label = self.label(&sample.text)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, true);
        let feats = g.constant(extract_features(sample));
        let z = self.logits(&mut g, &p, feats)?;
        let (loss, grad) = objective(g.value(z), &label, self.alphabet.blank(), self.config.lattice)?;
        let root = g.fused_loss(z, loss, grad);
        let mut grads = g.backward(root);
        let out = p
            .vars()
            .iter()
            .zip(self.store.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
            .collect();
        Ok((loss, out))
    }

    pub fn align(&self, sample: &StrokeSequence) -> Result<Alignment> {
        let label = self.label(&sample.text)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let feats = g.constant(extract_features(sample));
        let z = self.logits(&mut g, &p, feats)?;
        decode_alignment(g.value(z), &label, self.alphabet.blank(), self.config.lattice)
    }

    /// Copy of `sample` with inferred eoc labels.
    pub fn segment(&self, sample: &StrokeSequence) -> Result<StrokeSequence> {
        let a = self.align(sample)?;
        StrokeSequence::new(sample.writer_id.clone(), sample.text.clone(), sample.points.clone(), Some(a.eoc))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let alphabet: String = self.alphabet.chars().iter().collect();
        checkpoint::save(
            dir,
            &[
                ("kind", "segmenter".into()),
                ("hidden", self.config.hidden.to_string()),
                ("layers", self.config.layers.to_string()),
                ("blank_between_distinct", self.config.lattice.blank_between_distinct.to_string()),
                ("alphabet", alphabet),
            ],
            &self.store,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = checkpoint::read_manifest(dir)?;
        if m.get("kind")? != "segmenter" {
            return Err(DsdError::Checkpoint("not a segmenter checkpoint".into()));
        }
        let config = SegNetConfig {
            hidden: m.parse_usize("hidden")?,
            layers: m.parse_usize("layers")?,
            lattice: LatticeOptions {
                blank_between_distinct: m.get("blank_between_distinct")? == "true",
            },
        };
        let mut net = SegNet::new(config, Alphabet::new(m.get("alphabet")?)?, 0);
        checkpoint::load_into(dir, &m, &mut net.store)?;
        Ok(net)
    }
}

#[derive(Clone, Debug)]
pub struct SegTrainConfig {
    pub steps: usize,
    /// Leading steps that use the flat-start objective. The lattice loss
    /// alone can settle in alignments that place boundaries by counting
    /// frames from the sequence ends.
    pub flat_start_steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub clip: (f64, f64),
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        SegTrainConfig {
            steps: 2000,
            flat_start_steps: 800,
            batch: 5,
            learning_rate: 1e-3,
            clip: (-10.0, 10.0),
            seed: 0,
        }
    }
}

/// Trains on labelled samples (eoc is not used). Returns the mean batch loss
/// per step; flat-start steps report their own objective.
pub fn train_segmenter(net: &mut SegNet, samples: &[StrokeSequence], cfg: &SegTrainConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(DsdError::Empty("training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(net.store.tensors(), cfg.learning_rate, cfg.clip)?;
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut acc: Option<Vec<Tensor>> = None;
        let mut total = 0.0;
        for _ in 0..cfg.batch {
            let s = samples.choose(&mut rng).expect("nonempty");
            let (loss, grads) = if step < cfg.flat_start_steps {
                net.flat_start_loss_and_grads(s)?
            } else {
                net.loss_and_grads(s)?
            };
            if !loss.is_finite() {
                return Err(DsdError::NonFinite {
                    step,
                    detail: format!("segmentation loss on {:?}", s.text),
                });
            }
            total += loss;
            match &mut acc {
                None => acc = Some(grads),
                Some(a) => a.iter_mut().zip(&grads).for_each(|(x, y)| x.add_assign(y)),
            }
        }
        let inv = 1.0 / cfg.batch as f64;
        let grads: Vec<_> = acc.expect("batch > 0").iter().map(|t| t.scale(inv)).collect();
        opt.step(net.store.tensors_mut(), &grads)?;
        trace.push(total * inv);
    }
    Ok(trace)
}
