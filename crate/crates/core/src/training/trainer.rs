use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::eval::{evaluate_span, predict_span, PREDICT_CHUNK};
use super::loss::{mse_loss, squared_error_sum_grad};
use super::split::fold_spans;
use crate::data::{window_starts, NormalizedData};
use crate::error::{Error, Result};
use crate::metrics::AccuracyReport;
use crate::network::Network;
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub window_length: usize,
    /// First time index of each window that contributes to the loss.
    /// Defaults to `receptive_field − 1`, the first index with full history.
    pub loss_region_start: Option<usize>,
    /// Tail fraction of the training span held back to pick the best epoch.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            max_epochs: 500,
            patience: 20,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            window_length: 1440,
            loss_region_start: None,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, receptive_field: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("invalid learning rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.window_length < receptive_field {
            return bad(format!(
                "window length {} is shorter than the receptive field {receptive_field}",
                self.window_length
            ));
        }
        if self.region_start(receptive_field) >= self.window_length {
            return bad("loss region is empty".into());
        }
        Ok(())
    }

    pub fn region_start(&self, receptive_field: usize) -> usize {
        self.loss_region_start.unwrap_or(receptive_field - 1)
    }
}

/// One training window: `[1, window_length, channels]` input and
/// `[1, window_length, loads]` target.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Tensor,
    pub target: Tensor,
}

/// Cuts overlapping windows out of each span. Spans shorter than one window
/// are skipped.
pub fn windows_from_spans(
    data: &NormalizedData,
    spans: &[Range<usize>],
    window_length: usize,
    overlap: usize,
) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for span in spans {
        if span.len() < window_length {
            continue;
        }
        for s in window_starts(span.len(), window_length, overlap)? {
            let (a, b) = (span.start + s, span.start + s + window_length);
            out.push(Window {
                input: data.input.slice_time(a, b)?,
                target: data.target.slice_time(a, b)?,
            });
        }
    }
    Ok(out)
}

/// Training windows plus an optional validation span of the same data.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub windows: Vec<Window>,
    pub validation: Option<Range<usize>>,
}

impl TrainingSet {
    /// Windows `train_spans`, first moving the tail of the last span long
    /// enough to spare it into validation.
    pub fn plan(
        data: &NormalizedData,
        train_spans: &[Range<usize>],
        config: &TrainConfig,
        receptive_field: usize,
    ) -> Result<Self> {
        config.validate(receptive_field)?;
        let mut spans = train_spans.to_vec();
        let mut validation = None;
        if config.validation_fraction > 0.0 {
            for span in spans.iter_mut().rev() {
                let held = (span.len() as f64 * config.validation_fraction).floor() as usize;
                if held > 0 && span.len() - held >= config.window_length {
                    validation = Some(span.end - held..span.end);
                    span.end -= held;
                    break;
                }
            }
        }
        let windows = windows_from_spans(data, &spans, config.window_length, receptive_field - 1)?;
        if windows.is_empty() {
            return Err(Error::Data(format!(
                "no training span holds a full window of {} samples",
                config.window_length
            )));
        }
        Ok(Self {
            windows,
            validation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the best epoch (by validation accuracy when a validation
    /// span exists, otherwise by training loss).
    pub best: Network,
    pub last: Network,
    /// 1-based; 0 when no epoch completed.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// Epoch whose loss became non-finite; `best` is the last good network.
    pub diverged_at: Option<usize>,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Minibatch Adam training. Shuffling and dropout masks derive from
/// `config.seed`, so identical inputs give bit-identical results.
pub fn train(
    net: Network,
    data: &NormalizedData,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let rf = net.receptive_field();
    config.validate(rf)?;
    let region = config.region_start(rf);
    for w in &set.windows {
        if w.input.shape()[1] != config.window_length || w.target.shape()[1] != config.window_length
        {
            return Err(Error::Shape(
                "window length differs from configuration".into(),
            ));
        }
    }
    let dropout = net.config().dropout_rate > 0.0;
    let mut adam = Adam::new(
        &net,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut outcome = TrainOutcome {
        best: net.clone(),
        last: net,
        best_epoch: 0,
        history: Vec::new(),
        stopped_early: false,
        diverged_at: None,
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..set.windows.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(
            config.seed,
            epoch as u64,
            u64::MAX,
        )));
        let net = &mut outcome.last;
        let mut sse_total = 0.0;
        let mut count_total = 0usize;
        let mut diverged = false;
        for batch in order.chunks(config.batch_size) {
            let mut grads = net.zero_gradients();
            let mut batch_count = 0usize;
            for &wi in batch {
                let w = &set.windows[wi];
                let step = net
                    .forward_cached(&w.input, dropout, mix(config.seed, epoch as u64, wi as u64))
                    .and_then(|(y, cache)| {
                        let (sse, dy, n) = squared_error_sum_grad(&y, &w.target, region)?;
                        let g = net.backward(&cache, &dy)?;
                        Ok((sse, n, g))
                    });
                let (sse, n, g) = match step {
                    Ok(v) => v,
                    Err(Error::NonFinite(_)) => {
                        diverged = true;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if !sse.is_finite() {
                    diverged = true;
                    break;
                }
                for (acc, gi) in grads.iter_mut().zip(&g.params) {
                    for (a, b) in acc.iter_mut().zip(gi) {
                        *a += b;
                    }
                }
                sse_total += sse;
                batch_count += n;
            }
            if diverged {
                break;
            }
            let inv = 1.0 / batch_count as f64;
            for g in grads.iter_mut().flatten() {
                *g *= inv;
            }
            adam.step(net, &grads);
            count_total += batch_count;
        }
        let train_loss = sse_total / count_total.max(1) as f64;
        if diverged || !train_loss.is_finite() {
            log::error!(
                "training diverged in epoch {epoch}; keeping epoch {}",
                outcome.best_epoch
            );
            outcome.diverged_at = Some(epoch);
            break;
        }

        let mut record = EpochRecord {
            epoch,
            train_loss,
            validation_loss: None,
            validation_accuracy: None,
        };
        let score = match &set.validation {
            Some(span) => match evaluate_span(net, data, span.clone()) {
                Ok(ev) => {
                    record.validation_loss = Some(ev.loss);
                    record.validation_accuracy = Some(ev.report.estimated_accuracy_total);
                    ev.report.estimated_accuracy_total
                }
                Err(Error::Metric(_)) => {
                    let pred = predict_span(net, &data.input, span.clone(), PREDICT_CHUNK)?;
                    let loss = mse_loss(&pred, &data.target.slice_time(span.start, span.end)?, 0)?;
                    record.validation_loss = Some(loss);
                    -loss
                }
                Err(Error::NonFinite(_)) => {
                    outcome.diverged_at = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            },
            None => -train_loss,
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6e}{}",
            record
                .validation_accuracy
                .map(|a| format!(", validation accuracy {a:.4}"))
                .unwrap_or_default()
        );
        outcome.history.push(record);
        if score > best_score {
            best_score = score;
            outcome.best = outcome.last.clone();
            outcome.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                outcome.stopped_early = true;
                break;
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug)]
pub struct CrossValidation {
    pub folds: Vec<Result<AccuracyReport>>,
    /// Mean over the folds that succeeded; `None` if none did.
    pub mean: Option<AccuracyReport>,
}

/// k-fold cross-validation over contiguous test spans that tile the
/// timeline. Every fold trains a fresh network from `build`; a failing fold
/// is reported and the remaining folds still run.
pub fn cross_validate<F>(
    build: F,
    data: &NormalizedData,
    k: usize,
    config: &TrainConfig,
) -> Result<CrossValidation>
where
    F: Fn() -> Result<Network>,
{
    let spans = fold_spans(data.len(), k)?;
    let folds: Vec<Result<AccuracyReport>> = spans
        .iter()
        .enumerate()
        .map(|(i, test)| {
            log::info!("fold {}/{k}: testing on samples {test:?}", i + 1);
            let net = build()?;
            let rf = net.receptive_field();
            let set = TrainingSet::plan(data, &[0..test.start, test.end..data.len()], config, rf)?;
            let outcome = train(net, data, &set, config)?;
            if let Some(epoch) = outcome.diverged_at {
                return Err(Error::Diverged { epoch });
            }
            Ok(evaluate_span(&outcome.best, data, test.clone())?.report)
        })
        .collect();
    for (i, f) in folds.iter().enumerate() {
        if let Err(e) = f {
            log::warn!("fold {} failed: {e}", i + 1);
        }
    }
    let ok: Vec<AccuracyReport> = folds
        .iter()
        .filter_map(|f| f.as_ref().ok().cloned())
        .collect();
    let mean = if ok.is_empty() {
        None
    } else {
        Some(AccuracyReport::mean(&ok)?)
    };
    Ok(CrossValidation { folds, mean })
}
