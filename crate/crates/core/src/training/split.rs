use std::ops::Range;

use crate::data::MeterSeries;
use crate::error::{Error, Result};

/// Length of the training prefix when `len` samples are split at
/// `train_fraction`. Requires at least ten windows' worth of samples.
pub fn split_point(len: usize, train_fraction: f64, window_length: usize) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if window_length == 0 || len < 10 * window_length {
        return Err(Error::Data(format!(
            "{len} samples is fewer than ten windows of {window_length}"
        )));
    }
    Ok((len as f64 * train_fraction).floor() as usize)
}

/// Contiguous split: the first `train_fraction` of the timeline trains, the
/// remaining tail tests.
pub fn split_series(
    series: &MeterSeries,
    train_fraction: f64,
    window_length: usize,
) -> Result<(MeterSeries, MeterSeries)> {
    let cut = split_point(series.len(), train_fraction, window_length)?;
    Ok((series.slice(0, cut)?, series.slice(cut, series.len())?))
}

/// `k` contiguous spans that tile `0..len` in order.
pub fn fold_spans(len: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs k ≥ 2, got {k}"
        )));
    }
    if len < k {
        return Err(Error::Data(format!("{len} samples cannot form {k} folds")));
    }
    Ok((0..k).map(|i| i * len / k..(i + 1) * len / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_household, HouseholdConfig, SyntheticAppliance};
    use proptest::prelude::*;

    #[test]
    fn hundred_days_split_ninety_ten() {
        let cfg = HouseholdConfig::new(
            vec![SyntheticAppliance::constant("base", 100.0, 0.1)],
            100,
            3,
        );
        let series = synthesize_household(&cfg).unwrap();
        let (train, test) = split_series(&series, 0.9, 1440).unwrap();
        assert_eq!(train.len(), 90 * 1440);
        assert_eq!(test.len(), 10 * 1440);
        assert_eq!(train.timestamps.last().unwrap() + 60, test.timestamps[0]);
    }

    #[test]
    fn too_short_rejected() {
        assert!(split_point(9 * 1440, 0.9, 1440).is_err());
        assert!(split_point(10 * 1440, 1.0, 1440).is_err());
    }

    proptest! {
        #[test]
        fn folds_tile(len in 2usize..5000, k in 2usize..10) {
            prop_assume!(len >= k);
            let spans = fold_spans(len, k).unwrap();
            prop_assert_eq!(spans.len(), k);
            prop_assert_eq!(spans[0].start, 0);
            prop_assert_eq!(spans[k - 1].end, len);
            for w in spans.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            for s in &spans {
                prop_assert!(!s.is_empty());
            }
        }
    }
}
