use super::ScenarioData;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Smallest power of two `≥ max`; `1` for non-positive maxima.
pub fn next_power_of_two(max: f64) -> f64 {
    if !(max > 0.0) || !max.is_finite() {
        return 1.0;
    }
    let mut v = 2f64.powi(max.log2().ceil() as i32);
    // guard against log2 rounding either way
    while v < max {
        v *= 2.0;
    }
    while v / 2.0 >= max {
        v /= 2.0;
    }
    v
}

/// Per-input-channel power-of-two scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub scales: Vec<f64>,
}

impl ScaleRecord {
    /// Fits one scale per channel of a `[batch, time, channels]` tensor from
    /// that channel's maximum. All-zero channels get scale 1 and a warning.
    pub fn fit(input: &Tensor) -> Result<(Self, Vec<String>)> {
        let (_, t, c) = input.dims3()?;
        if t == 0 {
            return Err(Error::Data("cannot normalize an empty series".into()));
        }
        let mut max = vec![f64::NEG_INFINITY; c];
        for row in input.data().chunks(c) {
            for (m, &v) in max.iter_mut().zip(row) {
                *m = m.max(v);
            }
        }
        let mut warnings = Vec::new();
        let scales = max
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                if m <= 0.0 {
                    let msg = format!("input channel {i} has no positive values; using scale 1");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                next_power_of_two(m)
            })
            .collect();
        Ok((Self { scales }, warnings))
    }

    /// Divides each channel by its scale.
    pub fn normalize(&self, input: &Tensor) -> Result<Tensor> {
        self.apply(input, |v, s| v / s)
    }

    pub fn denormalize(&self, input: &Tensor) -> Result<Tensor> {
        self.apply(input, |v, s| v * s)
    }

    fn apply(&self, input: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (_, _, c) = input.dims3()?;
        if c != self.scales.len() {
            return Err(Error::Shape(format!(
                "{c} channels but {} scales",
                self.scales.len()
            )));
        }
        let data = input
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(&self.scales).map(|(&v, &s)| f(v, s)))
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }
}

/// Scenario data in network units: inputs scaled per channel, targets scaled
/// by the masked channel's scale so that `target ≈ mask · input` holds in
/// normalized units as well.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedData {
    pub input: Tensor,
    pub target: Tensor,
    pub record: ScaleRecord,
    pub target_scale: f64,
    pub load_names: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl NormalizedData {
    /// Fits scales on `data` itself.
    pub fn fit(data: &ScenarioData, mask_channel: usize) -> Result<(Self, Vec<String>)> {
        let (record, warnings) = ScaleRecord::fit(&data.input)?;
        Ok((Self::with_record(data, mask_channel, record)?, warnings))
    }

    /// Applies an existing record (e.g. one stored with a checkpoint).
    pub fn with_record(
        data: &ScenarioData,
        mask_channel: usize,
        record: ScaleRecord,
    ) -> Result<Self> {
        let target_scale = *record
            .scales
            .get(mask_channel)
            .ok_or_else(|| Error::Shape(format!("mask channel {mask_channel} has no scale")))?;
        let input = record.normalize(&data.input)?;
        let target = Tensor::new(
            data.target.shape().to_vec(),
            data.target
                .data()
                .iter()
                .map(|v| v / target_scale)
                .collect(),
        )?;
        Ok(Self {
            input,
            target,
            record,
            target_scale,
            load_names: data.load_names.clone(),
            timestamps: data.timestamps.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.input.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn next_power_cases() {
        assert_eq!(next_power_of_two(4800.0), 8192.0);
        assert_eq!(next_power_of_two(1024.0), 1024.0);
        assert_eq!(next_power_of_two(1025.0), 2048.0);
        assert_eq!(next_power_of_two(0.3), 0.5);
        assert_eq!(next_power_of_two(0.0), 1.0);
    }

    #[test]
    fn zero_channel_warns() {
        let x = Tensor::new(vec![1, 2, 2], vec![0., 3., 0., 5.]).unwrap();
        let (r, w) = ScaleRecord::fit(&x).unwrap();
        assert_eq!(r.scales, vec![1.0, 8.0]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn normalized_values_in_unit_range() {
        let x = Tensor::new(vec![1, 3, 1], vec![0., 4800., 1200.]).unwrap();
        let (r, _) = ScaleRecord::fit(&x).unwrap();
        let n = r.normalize(&x).unwrap();
        assert!(n.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    proptest! {
        #[test]
        fn round_trip_and_idempotence(v in prop::collection::vec(0.0f64..1e5, 3..30)) {
            let n = v.len() / 3 * 3;
            let x = Tensor::new(vec![1, n / 3, 3], v[..n].to_vec()).unwrap();
            let (r, _) = ScaleRecord::fit(&x).unwrap();
            let y = r.normalize(&x).unwrap();
            let back = r.denormalize(&y).unwrap();
            for (a, b) in back.data().iter().zip(x.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            // normalizing with the identity record of an already-scaled series
            let unit = ScaleRecord { scales: vec![1.0; 3] };
            prop_assert_eq!(unit.normalize(&y).unwrap(), y);
        }
    }
}
