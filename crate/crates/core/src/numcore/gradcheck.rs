use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Anything with a flat parameter vector, a scalar loss, and an analytic
/// gradient of that loss.
pub trait GradCheckable {
    fn num_params(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    fn loss(&self) -> Result<f64>;
    /// Analytic gradient, one entry per parameter.
    fn gradient(&self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub parameter_count_checked: usize,
    /// Index of the parameter with the worst agreement.
    pub worst_index: usize,
}

/// Gradients smaller than this are compared in absolute terms.
const RELATIVE_FLOOR: f64 = 1e-7;

/// `|a − b| / max(|a|, |b|, 1e-7)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the analytic gradient against central differences with step
/// `step` on up to `max_params` parameters drawn without replacement (all of
/// them when the model has fewer). Parameters are restored afterwards.
pub fn gradient_check<M: GradCheckable + ?Sized>(
    model: &mut M,
    max_params: usize,
    step: f64,
    seed: u64,
) -> Result<GradientCheckReport> {
    let base = model.loss()?;
    if !base.is_finite() {
        return Err(Error::NonFinite("gradient-check loss"));
    }
    let analytic = model.gradient()?;
    let n = model.num_params();
    if analytic.len() != n {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {n} parameters",
            analytic.len()
        )));
    }
    let indices: Vec<usize> = if max_params >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, n, max_params).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut worst = 0.0_f64;
    let mut worst_index = 0;
    for &i in &indices {
        let original = model.param(i);
        model.set_param(i, original + step);
        let plus = model.loss()?;
        model.set_param(i, original - step);
        let minus = model.loss()?;
        model.set_param(i, original);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("gradient-check loss"));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst {
            worst = err;
            worst_index = i;
        }
    }
    Ok(GradientCheckReport {
        max_relative_error: worst,
        parameter_count_checked: indices.len(),
        worst_index,
    })
}
