use super::tensor::Tensor;
use crate::error::{DsdError, Result};

/// Adam with elementwise gradient value clipping.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub clip_range: (f64, f64),
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &[Tensor], learning_rate: f64, clip_range: (f64, f64)) -> Result<Self> {
        if !(clip_range.0 < clip_range.1) {
            return Err(DsdError::Invalid(format!(
                "clip range {:?} must satisfy lo < hi",
                clip_range
            )));
        }
        if !(learning_rate > 0.0) {
            return Err(DsdError::Invalid("learning rate must be positive".into()));
        }
        let zeros = |t: &Tensor| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).unwrap();
        Ok(OptimizerState {
            learning_rate,
            clip_range,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        })
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Clips every gradient entry into `clip_range`, then applies one
    /// bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(DsdError::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(DsdError::Shape(format!(
                    "adam: param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lo, hi) = self.clip_range;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gc = gi.clamp(lo, hi);
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gc;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gc * gc;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
