use std::ops::Range;

use super::loss::mse_loss;
use crate::data::NormalizedData;
use crate::error::{Error, Result};
use crate::metrics::{estimated_accuracy, AccuracyReport};
use crate::network::Network;
use crate::numcore::Tensor;

/// Default number of output steps computed per forward pass in
/// [`predict_span`]; bounds memory on long spans.
pub const PREDICT_CHUNK: usize = 4096;

/// Predictions for time steps `span` of a `[1, time, channels]` input. Each
/// chunk is run with up to `RF − 1` preceding samples of context, so the
/// result equals the corresponding slice of a forward pass over the entire
/// input.
pub fn predict_span(
    net: &Network,
    input: &Tensor,
    span: Range<usize>,
    chunk: usize,
) -> Result<Tensor> {
    let (b, t, _) = input.dims3()?;
    if b != 1 {
        return Err(Error::Shape(format!(
            "expected a single series, got batch {b}"
        )));
    }
    if span.start >= span.end || span.end > t {
        return Err(Error::Shape(format!("span {span:?} outside 0..{t}")));
    }
    let history = net.receptive_field() - 1;
    let chunk = chunk.max(1);
    let k = net.config().output_loads;
    let mut out = Vec::with_capacity((span.end - span.start) * k);
    let mut s = span.start;
    while s < span.end {
        let e = (s + chunk).min(span.end);
        let from = s.saturating_sub(history);
        let y = net.forward(&input.slice_time(from, e)?, false, 0)?;
        out.extend_from_slice(&y.data()[(s - from) * k..]);
        s = e;
    }
    Tensor::new(vec![1, span.end - span.start, k], out)
}

/// Held-out evaluation of one span.
#[derive(Debug, Clone)]
pub struct SpanEvaluation {
    pub report: AccuracyReport,
    /// Physical-unit predictions, clamped at zero.
    pub predictions: Tensor,
    /// Physical-unit ground truth.
    pub truth: Tensor,
    /// Mean squared error in normalized units (unclamped).
    pub loss: f64,
}

/// Predicts `span` of `data` and scores it in physical units.
pub fn evaluate_span(
    net: &Network,
    data: &NormalizedData,
    span: Range<usize>,
) -> Result<SpanEvaluation> {
    let normalized = predict_span(net, &data.input, span.clone(), PREDICT_CHUNK)?;
    let target = data.target.slice_time(span.start, span.end)?;
    let loss = mse_loss(&normalized, &target, 0)?;
    let scale = data.target_scale;
    let predictions = Tensor::new(
        normalized.shape().to_vec(),
        normalized
            .data()
            .iter()
            .map(|v| (v * scale).max(0.0))
            .collect(),
    )?;
    let truth = Tensor::new(
        target.shape().to_vec(),
        target.data().iter().map(|v| v * scale).collect(),
    )?;
    let report = estimated_accuracy(&predictions, &truth, &data.load_names)?;
    Ok(SpanEvaluation {
        report,
        predictions,
        truth,
        loss,
    })
}
