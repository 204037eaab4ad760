use serde::{Deserialize, Serialize};

use super::{Channels, MeterSeries, Signal};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Deferrable loads as `(label, AMPds2 meter code)`; the codes are the entity
/// names expected in `<entity>_<signal>` columns.
pub const DEFERRABLE_LOADS: [(&str, &str); 5] = [
    ("hvac", "FRE"),
    ("heat_pump", "HPE"),
    ("wall_oven", "WOE"),
    ("clothes_dryer", "CDE"),
    ("dishwasher", "DWE"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Network input is the real aggregate measurement.
    Noisy,
    /// Network input is the sum of the target loads' ground truth.
    Denoised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    pub target_loads: Vec<String>,
    pub input_signals: Vec<Signal>,
    pub output_signal: Signal,
}

impl Scenario {
    /// Deferrable-load scenario over AMPds2 meter codes.
    pub fn deferrable(mode: Mode, input_signals: Vec<Signal>, output_signal: Signal) -> Self {
        Self {
            mode,
            target_loads: DEFERRABLE_LOADS
                .iter()
                .map(|(_, c)| c.to_string())
                .collect(),
            input_signals,
            output_signal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_loads.is_empty() {
            return Err(Error::Config("scenario.target_loads is empty".into()));
        }
        if self.input_signals.is_empty() {
            return Err(Error::Config("scenario.input_signals is empty".into()));
        }
        for (i, s) in self.input_signals.iter().enumerate() {
            if self.input_signals[..i].contains(s) {
                return Err(Error::Config(format!(
                    "scenario.input_signals lists {s} twice"
                )));
            }
        }
        for (i, l) in self.target_loads.iter().enumerate() {
            if self.target_loads[..i].contains(l) {
                return Err(Error::Config(format!(
                    "scenario.target_loads lists {l:?} twice"
                )));
            }
        }
        self.mask_channel().map(|_| ())
    }

    /// Position of the output signal among the inputs; the mask multiplies it.
    pub fn mask_channel(&self) -> Result<usize> {
        self.input_signals
            .iter()
            .position(|&s| s == self.output_signal)
            .ok_or_else(|| {
                Error::Config(format!(
                    "scenario.output_signal {} must be one of the input signals",
                    self.output_signal
                ))
            })
    }
}

/// Physical-unit network input and per-load targets for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    /// `[1, time, input_signals]`.
    pub input: Tensor,
    /// `[1, time, target_loads]`, the output signal of each target load.
    pub target: Tensor,
    pub load_names: Vec<String>,
    pub timestamps: Vec<i64>,
}

pub fn build_scenario(series: &MeterSeries, scenario: &Scenario) -> Result<ScenarioData> {
    scenario.validate()?;
    series.validate()?;
    let t = series.len();
    let targets: Vec<&Channels> = scenario
        .target_loads
        .iter()
        .map(|name| {
            series
                .appliance(name)
                .ok_or_else(|| Error::Data(format!("target load {name:?} has no sub-meter data")))
        })
        .collect::<Result<_>>()?;

    let channel = |ch: &Channels, sig: Signal, who: &str| -> Result<Vec<f64>> {
        ch.get(sig)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::Data(format!("{who} lacks signal {sig}")))
    };

    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(scenario.input_signals.len());
    for &sig in &scenario.input_signals {
        let v = match scenario.mode {
            Mode::Noisy => channel(&series.aggregate, sig, "aggregate")?,
            Mode::Denoised => {
                let mut sum = vec![0.0; t];
                for (name, ch) in scenario.target_loads.iter().zip(&targets) {
                    for (a, b) in sum.iter_mut().zip(channel(ch, sig, name)?) {
                        *a += b;
                    }
                }
                sum
            }
        };
        inputs.push(v);
    }
    let outputs: Vec<Vec<f64>> = scenario
        .target_loads
        .iter()
        .zip(&targets)
        .map(|(name, ch)| channel(ch, scenario.output_signal, name))
        .collect::<Result<_>>()?;

    Ok(ScenarioData {
        input: interleave(&inputs, t)?,
        target: interleave(&outputs, t)?,
        load_names: scenario.target_loads.clone(),
        timestamps: series.timestamps.clone(),
    })
}

/// Share of the aggregate `signal` energy not explained by `targets`:
/// `Σ_t (agg − Σ targets) / Σ_t agg`.
pub fn noise_fraction(series: &MeterSeries, targets: &[String], signal: Signal) -> Result<f64> {
    let agg = series
        .aggregate
        .get(signal)
        .ok_or_else(|| Error::Data(format!("aggregate lacks signal {signal}")))?;
    let total: f64 = agg.iter().sum();
    let mut explained = 0.0;
    for name in targets {
        let ch = series
            .appliance(name)
            .and_then(|c| c.get(signal))
            .ok_or_else(|| Error::Data(format!("target load {name:?} lacks signal {signal}")))?;
        explained += ch.iter().sum::<f64>();
    }
    if total <= 0.0 {
        return Err(Error::Data("aggregate energy is zero".into()));
    }
    Ok((total - explained) / total)
}

fn interleave(columns: &[Vec<f64>], t: usize) -> Result<Tensor> {
    let c = columns.len();
    let mut data = vec![0.0; t * c];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * c + j] = v;
        }
    }
    Tensor::new(vec![1, t, c], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house() -> MeterSeries {
        let mut a = Channels::new();
        a.insert(Signal::P, vec![100.0; 4]);
        a.insert(Signal::Q, vec![10.0; 4]);
        let mut b = Channels::new();
        b.insert(Signal::P, vec![100.0; 4]);
        b.insert(Signal::Q, vec![0.0, 5.0, 0.0, 5.0]);
        let mut agg = Channels::new();
        agg.insert(Signal::P, vec![500.0; 4]);
        agg.insert(Signal::Q, vec![30.0; 4]);
        MeterSeries {
            timestamps: vec![0, 60, 120, 180],
            aggregate: agg,
            appliances: vec![("a".into(), a), ("b".into(), b)],
            noise: None,
        }
    }

    fn scenario(mode: Mode, inputs: Vec<Signal>) -> Scenario {
        Scenario {
            mode,
            target_loads: vec!["a".into(), "b".into()],
            input_signals: inputs,
            output_signal: Signal::P,
        }
    }

    #[test]
    fn denoised_input_is_sum_of_targets() {
        let d = build_scenario(&house(), &scenario(Mode::Denoised, vec![Signal::P])).unwrap();
        assert_eq!(d.input.shape(), &[1, 4, 1]);
        assert!(d.input.data().iter().all(|&v| v == 200.0));
        assert_eq!(d.target.shape(), &[1, 4, 2]);
    }

    #[test]
    fn noisy_input_is_aggregate() {
        let d =
            build_scenario(&house(), &scenario(Mode::Noisy, vec![Signal::Q, Signal::P])).unwrap();
        assert_eq!(d.input.shape(), &[1, 4, 2]);
        assert_eq!(&d.input.data()[..2], &[30.0, 500.0]);
    }

    #[test]
    fn missing_target_rejected() {
        let mut s = scenario(Mode::Noisy, vec![Signal::P]);
        s.target_loads.push("oven".into());
        let err = build_scenario(&house(), &s).unwrap_err();
        assert!(err.to_string().contains("oven"));
    }

    #[test]
    fn output_must_be_an_input() {
        let mut s = scenario(Mode::Noisy, vec![Signal::Q]);
        assert!(s.validate().is_err());
        s.input_signals = vec![Signal::P, Signal::P];
        assert!(s.validate().is_err());
    }

    #[test]
    fn noise_fraction_of_fixture() {
        let f = noise_fraction(&house(), &["a".into(), "b".into()], Signal::P).unwrap();
        assert!((f - 0.6).abs() < 1e-12);
    }

    #[test]
    fn deferrable_preset() {
        let s = Scenario::deferrable(Mode::Noisy, vec![Signal::I], Signal::I);
        assert_eq!(s.target_loads, vec!["FRE", "HPE", "WOE", "CDE", "DWE"]);
        assert!(s.validate().is_ok());
    }
}
