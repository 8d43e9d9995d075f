use rand::Rng;

use super::mdn::MdnStep;
use super::net::DsdModel;
use crate::data::{StrokePoint, StrokeSequence};
use crate::error::{DsdError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeOptions {
    pub max_steps: usize,
    /// 0 selects the most probable component and emits its mean.
    pub temperature: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_steps: 1500,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decoded {
    /// Carries eoc labels unless truncated.
    pub sequence: StrokeSequence,
    pub truncated: bool,
    /// Points drawn for each character; a truncated run omits the rest.
    pub points_per_char: Vec<usize>,
}

impl DsdModel {
    /// Autoregressive generation conditioned on one DSD per character.
    ///
    /// Each character receives at least one point: the eoc flag of a step
    /// marks the point drawn at that step as the character's last. The final
    /// point is always a pen lift.
    pub fn decode_strokes(
        &self,
        wcts: &[Vec<f64>],
        text: &str,
        writer_id: &str,
        rng: &mut impl Rng,
        opts: DecodeOptions,
    ) -> Result<Decoded> {
        if wcts.is_empty() {
            return Err(DsdError::Empty("writer-character DSDs".into()));
        }
        if opts.max_steps == 0 {
            return Err(DsdError::Invalid("max_steps must be positive".into()));
        }
        let m = text.chars().count();
        if m != wcts.len() {
            return Err(DsdError::Shape(format!("{} DSDs for {m} characters", wcts.len())));
        }
        let l = self.latent();
        if wcts.iter().any(|w| w.len() != l) {
            return Err(DsdError::Shape(format!("DSDs must have length {l}")));
        }
        let k = self.config.mixtures;
        let scale = self.config.delta_scale;
        let mut sa = self.dec_lstm_a.zero_state();
        let mut sb = self.dec_lstm_b.zero_state();
        let mut prev = [0.0; 3];
        let mut points = Vec::new();
        let mut eoc = Vec::new();
        let mut counts = vec![0usize; m];
        let mut ch = 0;
        let mut truncated = true;
        let mut input = Vec::with_capacity(2 * l);
        for _ in 0..opts.max_steps {
            let mut a = self.dec_fc.apply(&self.store, &prev);
            for x in &mut a {
                if *x < 0.0 {
                    *x *= self.config.leaky_slope;
                }
            }
            let ha = self.dec_lstm_a.step(&self.store, &a, &mut sa);
            input.clear();
            input.extend_from_slice(&ha);
            input.extend_from_slice(&wcts[ch]);
            let hb = self.dec_lstm_b.step(&self.store, &input, &mut sb);
            let step = MdnStep::from_raw(&self.dec_head.apply(&self.store, &hb), k);
            let (dx, dy) = step.sample(rng, opts.temperature);
            let eos = step.eos > 0.5;
            let end_char = step.eoc > 0.5;
            points.push(StrokePoint::new(dx * scale, dy * scale, eos));
            eoc.push(end_char);
            counts[ch] += 1;
            prev = [dx, dy, f64::from(u8::from(eos))];
            if end_char {
                ch += 1;
                if ch == m {
                    truncated = false;
                    break;
                }
            }
        }
        if let Some(last) = points.last_mut() {
            last.eos = true;
        }
        counts.truncate(if truncated { ch + 1 } else { m });
        let eoc = (!truncated).then_some(eoc);
        let sequence = StrokeSequence::new(writer_id, text, points, eoc)?;
        Ok(Decoded {
            sequence,
            truncated,
            points_per_char: counts,
        })
    }
}
