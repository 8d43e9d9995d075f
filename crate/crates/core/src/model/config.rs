use crate::data::Alphabet;
use crate::error::{DsdError, Result};
use crate::numeric::{Affine, LstmParams};

use super::mdn::output_width;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DsdConfig {
    /// Latent size `L`; character matrices are `L x L`.
    pub latent: usize,
    /// Mixture components `K`.
    pub mixtures: usize,
    pub alphabet: Alphabet,
    pub enc_layers: usize,
    pub g_layers: usize,
    pub h_layers: usize,
    /// Layers of each of the two decoder stacks.
    pub dec_layers: usize,
    pub leaky_slope: f64,
    /// Stroke deltas are divided by this before entering the network.
    pub delta_scale: f64,
}

impl Default for DsdConfig {
    fn default() -> Self {
        DsdConfig {
            latent: 256,
            mixtures: 20,
            alphabet: Alphabet::default(),
            enc_layers: 6,
            g_layers: 3,
            h_layers: 3,
            dec_layers: 3,
            leaky_slope: 0.01,
            delta_scale: 1.0,
        }
    }
}

/// Parameter counts per component, computed from shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub enc: usize,
    pub g_fc1: usize,
    pub g_lstm: usize,
    pub g_fc2: usize,
    pub h: usize,
    pub dec: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.enc + self.g_fc1 + self.g_lstm + self.g_fc2 + self.h + self.dec
    }
}

impl DsdConfig {
    /// Desk-scale configuration.
    pub fn small(latent: usize, mixtures: usize) -> Self {
        DsdConfig {
            latent,
            mixtures,
            ..DsdConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.latent,
            self.mixtures,
            self.enc_layers,
            self.g_layers,
            self.h_layers,
            self.dec_layers,
        ];
        if positive.contains(&0) {
            return Err(DsdError::Invalid("model sizes must be positive".into()));
        }
        if !(self.delta_scale.is_finite() && self.delta_scale > 0.0) {
            return Err(DsdError::Invalid(format!("delta_scale {}", self.delta_scale)));
        }
        Ok(())
    }

    pub fn param_counts(&self) -> ParamCounts {
        let l = self.latent;
        let q = self.alphabet.size();
        ParamCounts {
            enc: Affine::param_count(3, l) + LstmParams::param_count(l, l, self.enc_layers),
            g_fc1: Affine::param_count(q, l),
            g_lstm: LstmParams::param_count(l, l, self.g_layers),
            g_fc2: Affine::param_count(l, l * l),
            h: LstmParams::param_count(l, l, self.h_layers),
            dec: Affine::param_count(3, l)
                + LstmParams::param_count(l, l, self.dec_layers)
                + LstmParams::param_count(2 * l, 2 * l, self.dec_layers)
                + Affine::param_count(2 * l, output_width(self.mixtures)),
        }
    }
}
