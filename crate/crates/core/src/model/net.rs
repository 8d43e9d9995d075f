use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DsdConfig;
use super::mdn::output_width;
use crate::data::{Alphabet, StrokeSequence};
use crate::error::{DsdError, Result};
use crate::numeric::checkpoint;
use crate::numeric::{mat_inverse, Affine, Bound, Graph, LstmParams, ParamStore, Tensor, Var};

/// Initial input-, forget- and output-gate bias of every recurrent layer.
/// With zero gate biases a six-layer stack shrinks its input about 1000x.
pub const GATE_BIAS: f64 = 1.0;

/// Encoder, character-matrix generator, restorer and decoder parameters.
#[derive(Clone, Debug)]
pub struct DsdModel {
    pub config: DsdConfig,
    pub store: ParamStore,
    pub enc_fc: Affine,
    pub enc_lstm: LstmParams,
    pub g_fc1: Affine,
    pub g_lstm: LstmParams,
    pub g_fc2: Affine,
    pub h_lstm: LstmParams,
    pub dec_fc: Affine,
    pub dec_lstm_a: LstmParams,
    pub dec_lstm_b: LstmParams,
    pub dec_head: Affine,
}

/// Parameter groups, for ablation checks and reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    CharacterGenerator,
    Restorer,
    Decoder,
}

impl DsdModel {
    pub fn new(config: DsdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let l = config.latent;
        let q = config.alphabet.size();
        let r = &mut rng;
        let enc_fc = Affine::new(&mut s, r, "enc.fc", 3, l);
        let enc_lstm = LstmParams::new(&mut s, r, "enc.lstm", l, l, config.enc_layers);
        let g_fc1 = Affine::new(&mut s, r, "g.fc1", q, l);
        let g_lstm = LstmParams::new(&mut s, r, "g.lstm", l, l, config.g_layers);
        let g_fc2 = Affine::new(&mut s, r, "g.fc2", l, l * l);
        let h_lstm = LstmParams::new(&mut s, r, "h.lstm", l, l, config.h_layers);
        let dec_fc = Affine::new(&mut s, r, "dec.fc", 3, l);
        let dec_lstm_a = LstmParams::new(&mut s, r, "dec.lstm_a", l, l, config.dec_layers);
        let dec_lstm_b = LstmParams::new(&mut s, r, "dec.lstm_b", 2 * l, 2 * l, config.dec_layers);
        let dec_head = Affine::new(&mut s, r, "dec.head", 2 * l, output_width(config.mixtures));
        // C starts near the identity so that it is invertible from step 0.
        let fc2_bias = s.get_mut(g_fc2.b).data_mut();
        for i in 0..l {
            fc2_bias[i * l + i] = 1.0;
        }
        for lstm in [&enc_lstm, &g_lstm, &h_lstm, &dec_lstm_a, &dec_lstm_b] {
            let h = lstm.hidden_dim;
            for layer in &lstm.layers {
                let b = s.get_mut(layer.b).data_mut();
                b[..2 * h].fill(GATE_BIAS);
                b[3 * h..].fill(GATE_BIAS);
            }
        }
        Ok(DsdModel {
            config,
            store: s,
            enc_fc,
            enc_lstm,
            g_fc1,
            g_lstm,
            g_fc2,
            h_lstm,
            dec_fc,
            dec_lstm_a,
            dec_lstm_b,
            dec_head,
        })
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.config.alphabet
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Group of every stored tensor, in store order.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        self.store
            .iter()
            .map(|(name, _)| match name.split('.').next() {
                Some("enc") => ParamGroup::Encoder,
                Some("g") => ParamGroup::CharacterGenerator,
                Some("h") => ParamGroup::Restorer,
                _ => ParamGroup::Decoder,
            })
            .collect()
    }

    /// `N x 3` network input: scaled deltas and the eos bit.
    pub fn point_features(&self, x: &StrokeSequence) -> Tensor {
        let s = self.config.delta_scale;
        let data = x
            .points
            .iter()
            .flat_map(|p| [p.dx / s, p.dy / s, f64::from(u8::from(p.eos))])
            .collect();
        Tensor::from_vec(x.len(), 3, data)
    }

    /// Decoder inputs under teacher forcing: row 0 is the zero start point,
    /// row `t` is point `t - 1`.
    pub fn teacher_inputs(&self, x: &StrokeSequence) -> Tensor {
        let f = self.point_features(x);
        let mut data = vec![0.0; 3];
        data.extend_from_slice(&f.data()[..(x.len() - 1) * 3]);
        Tensor::from_vec(x.len(), 3, data)
    }

    fn one_hot(&self, chars: &[usize]) -> Tensor {
        let q = self.config.alphabet.size();
        let mut t = Tensor::zeros(chars.len(), q);
        for (i, &c) in chars.iter().enumerate() {
            t.set(i, c, 1.0);
        }
        t
    }

    pub fn char_indices(&self, text: &str) -> Result<Vec<usize>> {
        if text.is_empty() {
            return Err(DsdError::Empty("text".into()));
        }
        self.config.alphabet.indices(text)
    }

    // ----- graph builders -------------------------------------------------

    /// Encoder hidden states at every point (`N x L`).
    pub fn enc_states_graph(&self, g: &mut Graph, p: &Bound, features: Tensor) -> Result<Var> {
        let x = g.constant(features);
        let a = self.enc_fc.forward(g, p, x)?;
        let a = g.leaky_relu(a, self.config.leaky_slope);
        self.enc_lstm.forward(g, p, a, false)
    }

    /// Writer-character DSDs (`M x L`), the encoder state at each eoc point.
    pub fn enc_graph(&self, g: &mut Graph, p: &Bound, x: &StrokeSequence) -> Result<Var> {
        let idx = x.eoc_indices()?;
        let h = self.enc_states_graph(g, p, self.point_features(x))?;
        Ok(g.gather_rows(h, &idx))
    }

    /// Prefix encodings `c^raw` (`M x L`).
    pub fn char_raw_graph(&self, g: &mut Graph, p: &Bound, chars: &[usize]) -> Result<Var> {
        let oh = g.constant(self.one_hot(chars));
        let a = self.g_fc1.forward(g, p, oh)?;
        self.g_lstm.forward(g, p, a, false)
    }

    /// One `L x L` character matrix per prefix.
    pub fn char_graph(&self, g: &mut Graph, p: &Bound, chars: &[usize]) -> Result<Vec<Var>> {
        let l = self.latent();
        let raw = self.char_raw_graph(g, p, chars)?;
        let flat = self.g_fc2.forward(g, p, raw)?;
        (0..chars.len())
            .map(|t| {
                let row = g.row(flat, t);
                g.reshape(row, l, l)
            })
            .collect()
    }

    /// Restorer outputs at every position (`S x L`).
    pub fn restore_graph(&self, g: &mut Graph, p: &Bound, segments: Var) -> Result<Var> {
        self.h_lstm.forward(g, p, segments, false)
    }

    /// Raw MDN outputs (`N x (6K + 2)`) for decoder inputs `inputs`
    /// (`N x 3`) and per-point conditioning `w` (`N x L`).
    pub fn dec_graph(&self, g: &mut Graph, p: &Bound, inputs: Tensor, w: Var) -> Result<Var> {
        let ha = self.dec_points_graph(g, p, inputs)?;
        self.dec_cond_graph(g, p, ha, w)
    }

    /// First decoder stack; depends on the points only.
    pub fn dec_points_graph(&self, g: &mut Graph, p: &Bound, inputs: Tensor) -> Result<Var> {
        let x = g.constant(inputs);
        let a = self.dec_fc.forward(g, p, x)?;
        let a = g.leaky_relu(a, self.config.leaky_slope);
        self.dec_lstm_a.forward(g, p, a, false)
    }

    /// Second decoder stack and head, conditioned on `w` (`N x L`).
    pub fn dec_cond_graph(&self, g: &mut Graph, p: &Bound, points: Var, w: Var) -> Result<Var> {
        let cat = g.concat_cols(&[points, w])?;
        let hb = self.dec_lstm_b.forward(g, p, cat, false)?;
        self.dec_head.forward(g, p, hb)
    }

    // ----- step-wise inference (no tape, no parameter copies) --------------

    fn leaky(&self, v: &mut [f64]) {
        let s = self.config.leaky_slope;
        for x in v {
            if *x < 0.0 {
                *x *= s;
            }
        }
    }

    /// Encoder states at every point.
    pub fn encoder_states(&self, x: &StrokeSequence) -> Vec<Vec<f64>> {
        let f = self.point_features(x);
        let mut state = self.enc_lstm.zero_state();
        (0..f.rows())
            .map(|t| {
                let mut a = self.enc_fc.apply(&self.store, f.row(t));
                self.leaky(&mut a);
                self.enc_lstm.step(&self.store, &a, &mut state)
            })
            .collect()
    }

    /// `w_{c_1..c_t}` for `t = 1..M`: the encoder state at each eoc point.
    pub fn encode_strokes(&self, x: &StrokeSequence) -> Result<Vec<Vec<f64>>> {
        let idx = x.eoc_indices()?;
        let states = self.encoder_states(x);
        Ok(idx.into_iter().map(|i| states[i].clone()).collect())
    }

    /// Character matrices of every prefix of `text`.
    pub fn char_dsd(&self, text: &str) -> Result<Vec<Tensor>> {
        let chars = self.char_indices(text)?;
        Ok(self.char_dsd_indices(&chars))
    }

    pub fn char_dsd_indices(&self, chars: &[usize]) -> Vec<Tensor> {
        let l = self.latent();
        self.char_raw(chars)
            .iter()
            .map(|raw| Tensor::from_vec(l, l, self.g_fc2.apply(&self.store, raw)))
            .collect()
    }

    /// Prefix encodings `c^raw`.
    pub fn char_raw(&self, chars: &[usize]) -> Vec<Vec<f64>> {
        let oh = self.one_hot(chars);
        let mut state = self.g_lstm.zero_state();
        (0..chars.len())
            .map(|t| {
                let a = self.g_fc1.apply(&self.store, oh.row(t));
                self.g_lstm.step(&self.store, &a, &mut state)
            })
            .collect()
    }

    /// Restorer outputs after each of `segments`.
    pub fn restore_all(&self, segments: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut state = self.h_lstm.zero_state();
        segments.iter().map(|s| self.h_lstm.step(&self.store, s, &mut state)).collect()
    }

    /// Method β: last restorer output over the given segment DSDs.
    pub fn reconstruct_beta(&self, segments: &[Vec<f64>]) -> Result<Vec<f64>> {
        if segments.is_empty() {
            return Err(DsdError::Empty("segment list".into()));
        }
        Ok(self.restore_all(segments).pop().expect("nonempty"))
    }

    /// Mean writer DSD of a sample, from its own strokes.
    pub fn writer_dsd(&self, x: &StrokeSequence) -> Result<Vec<f64>> {
        let w = self.encode_strokes(x)?;
        let c = self.char_dsd(&x.text)?;
        mean_writer_dsd(&w, &c)
    }

    // ----- persistence -----------------------------------------------------

    pub fn save(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let alphabet: String = c.alphabet.chars().iter().collect();
        checkpoint::save(
            dir,
            &[
                ("kind", "dsd".into()),
                ("latent", c.latent.to_string()),
                ("mixtures", c.mixtures.to_string()),
                ("enc_layers", c.enc_layers.to_string()),
                ("g_layers", c.g_layers.to_string()),
                ("h_layers", c.h_layers.to_string()),
                ("dec_layers", c.dec_layers.to_string()),
                ("leaky_slope", c.leaky_slope.to_string()),
                ("delta_scale", c.delta_scale.to_string()),
                ("alphabet", alphabet),
            ],
            &self.store,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = checkpoint::read_manifest(dir)?;
        if m.get("kind")? != "dsd" {
            return Err(DsdError::Checkpoint("not a DSD model checkpoint".into()));
        }
        let config = DsdConfig {
            latent: m.parse_usize("latent")?,
            mixtures: m.parse_usize("mixtures")?,
            alphabet: Alphabet::new(m.get("alphabet")?)?,
            enc_layers: m.parse_usize("enc_layers")?,
            g_layers: m.parse_usize("g_layers")?,
            h_layers: m.parse_usize("h_layers")?,
            dec_layers: m.parse_usize("dec_layers")?,
            leaky_slope: m.parse_f64("leaky_slope")?,
            delta_scale: m.parse_f64("delta_scale")?,
        };
        let mut model = DsdModel::new(config, 0)?;
        checkpoint::load_into(dir, &m, &mut model.store)?;
        Ok(model)
    }
}

/// `C w` for a row-major `L x L` matrix.
pub fn mat_vec(c: &Tensor, w: &[f64]) -> Vec<f64> {
    (0..c.rows()).map(|i| c.row(i).iter().zip(w).map(|(a, b)| a * b).sum()).collect()
}

/// Method α: `C w̄`.
pub fn reconstruct_alpha(c: &Tensor, w: &[f64]) -> Vec<f64> {
    mat_vec(c, w)
}

/// Mean of `C_t^-1 w_t` over the sample's characters.
pub fn mean_writer_dsd(wcts: &[Vec<f64>], cs: &[Tensor]) -> Result<Vec<f64>> {
    if wcts.is_empty() || wcts.len() != cs.len() {
        return Err(DsdError::Shape(format!("{} DSDs for {} matrices", wcts.len(), cs.len())));
    }
    let cands = writer_candidates(wcts, cs)?;
    let l = cands[0].len();
    let mut mean = vec![0.0; l];
    for c in &cands {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    let inv = 1.0 / cands.len() as f64;
    Ok(mean.into_iter().map(|m| m * inv).collect())
}

/// `C_t^-1 w_t` for every `t`; a singular matrix reports its position.
pub fn writer_candidates(wcts: &[Vec<f64>], cs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    wcts.iter()
        .zip(cs)
        .enumerate()
        .map(|(t, (w, c))| match mat_inverse(c) {
            Ok(ci) => Ok(mat_vec(&ci, w)),
            Err(DsdError::SingularMatrix { .. }) => Err(DsdError::SingularAt { index: t }),
            Err(e) => Err(e),
        })
        .collect()
}

/// `C v` on the tape, with `v` a `1 x L` row; returns a row.
pub fn mat_vec_graph(g: &mut Graph, c: Var, v: Var) -> Result<Var> {
    let ct = g.transpose(c);
    g.matmul(v, ct)
}
