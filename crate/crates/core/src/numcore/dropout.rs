use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Inverted dropout: in training, each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`; at inference it is the
/// identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Draws a multiplicative mask (entries `0` or `1/(1−rate)`), or `None`
    /// when the layer is inactive.
    pub fn sample_mask<R: Rng + ?Sized>(
        &self,
        len: usize,
        rng: &mut R,
        training: bool,
    ) -> Option<Vec<f64>> {
        if !training || self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some(
            (0..len)
                .map(|_| {
                    if rng.gen::<f64>() < self.rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect(),
        )
    }

    /// Applies dropout and returns the mask used (for the backward pass).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        rng: &mut R,
        training: bool,
    ) -> (Tensor, Option<Vec<f64>>) {
        match self.sample_mask(input.len(), rng, training) {
            None => (input.clone(), None),
            Some(mask) => {
                let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
                (Tensor::from_parts(input.shape().to_vec(), data), Some(mask))
            }
        }
    }
}
