//! Estimated Accuracy:
//!
//! `EA = 1 − Σ_t Σ_k |ŝ_k(t) − s_k(t)| / (2 · Σ_t Σ_k s_k(t))`
//!
//! and its per-load variant (the same ratio without the sum over loads).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadAccuracy {
    pub name: String,
    /// `None` when this load never draws power in the evaluated span.
    pub estimated_accuracy: Option<f64>,
    pub absolute_error_sum: f64,
    pub ground_truth_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub estimated_accuracy_total: f64,
    pub per_appliance: Vec<LoadAccuracy>,
    pub absolute_error_sum: f64,
    pub ground_truth_sum: f64,
}

/// Computes total and per-load Estimated Accuracy over `[batch, time, loads]`
/// tensors in physical units.
pub fn estimated_accuracy(
    predictions: &Tensor,
    truth: &Tensor,
    load_names: &[String],
) -> Result<AccuracyReport> {
    let (_, _, k) = truth.dims3()?;
    predictions.ensure_same_shape(truth, "predictions vs truth")?;
    if load_names.len() != k {
        return Err(Error::Shape(format!(
            "{} load names for {k} loads",
            load_names.len()
        )));
    }
    let mut err = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for (i, (&p, &s)) in predictions.data().iter().zip(truth.data()).enumerate() {
        if s < 0.0 {
            return Err(Error::Metric(format!(
                "ground truth must be nonnegative, found {s}"
            )));
        }
        err[i % k] += (p - s).abs();
        tot[i % k] += s;
    }
    let absolute_error_sum: f64 = err.iter().sum();
    let ground_truth_sum: f64 = tot.iter().sum();
    if ground_truth_sum <= 0.0 {
        return Err(Error::Metric(
            "estimated accuracy is undefined when the ground truth is identically zero".into(),
        ));
    }
    let per_appliance = load_names
        .iter()
        .zip(err.iter().zip(&tot))
        .map(|(name, (&e, &g))| LoadAccuracy {
            name: name.clone(),
            estimated_accuracy: (g > 0.0).then(|| 1.0 - e / (2.0 * g)),
            absolute_error_sum: e,
            ground_truth_sum: g,
        })
        .collect();
    Ok(AccuracyReport {
        estimated_accuracy_total: 1.0 - absolute_error_sum / (2.0 * ground_truth_sum),
        per_appliance,
        absolute_error_sum,
        ground_truth_sum,
    })
}

impl AccuracyReport {
    /// Element-wise arithmetic mean of several reports over the same loads.
    pub fn mean(reports: &[AccuracyReport]) -> Result<AccuracyReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Metric("cannot average zero reports".into()))?;
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&AccuracyReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut per_appliance = Vec::with_capacity(first.per_appliance.len());
        for (j, load) in first.per_appliance.iter().enumerate() {
            let values: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.per_appliance.get(j).and_then(|l| l.estimated_accuracy))
                .collect();
            per_appliance.push(LoadAccuracy {
                name: load.name.clone(),
                estimated_accuracy: (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64),
                absolute_error_sum: avg(&|r| r.per_appliance[j].absolute_error_sum),
                ground_truth_sum: avg(&|r| r.per_appliance[j].ground_truth_sum),
            });
        }
        Ok(AccuracyReport {
            estimated_accuracy_total: avg(&|r| r.estimated_accuracy_total),
            per_appliance,
            absolute_error_sum: avg(&|r| r.absolute_error_sum),
            ground_truth_sum: avg(&|r| r.ground_truth_sum),
        })
    }

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "estimated_accuracy_total = {}",
            self.estimated_accuracy_total
        );
        let _ = writeln!(s, "absolute_error_sum = {}", self.absolute_error_sum);
        let _ = writeln!(s, "ground_truth_sum = {}", self.ground_truth_sum);
        for l in &self.per_appliance {
            match l.estimated_accuracy {
                Some(a) => {
                    let _ = writeln!(s, "estimated_accuracy.{} = {a}", l.name);
                }
                None => {
                    let _ = writeln!(s, "estimated_accuracy.{} = undefined", l.name);
                }
            }
        }
        s
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec![
            "estimated_accuracy_total".to_string(),
            "absolute_error_sum".to_string(),
            "ground_truth_sum".to_string(),
        ];
        h.extend(self.per_appliance.iter().map(|l| format!("ea_{}", l.name)));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.estimated_accuracy_total.to_string(),
            self.absolute_error_sum.to_string(),
            self.ground_truth_sum.to_string(),
        ];
        r.extend(
            self.per_appliance
                .iter()
                .map(|l| match l.estimated_accuracy {
                    Some(a) => a.to_string(),
                    None => String::new(),
                }),
        );
        r
    }
}
