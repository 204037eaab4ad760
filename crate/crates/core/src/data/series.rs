use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meter grid spacing: one sample per minute.
pub const SAMPLE_PERIOD_SECS: i64 = 60;

/// Electrical quantity carried by a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    /// Current, amps.
    I,
    /// Active power, watts.
    P,
    /// Reactive power, var.
    Q,
    /// Apparent power, VA.
    S,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::I, Signal::P, Signal::Q, Signal::S];
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Signal::I => "I",
            Signal::P => "P",
            Signal::Q => "Q",
            Signal::S => "S",
        };
        f.write_str(s)
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(Signal::I),
            "P" => Ok(Signal::P),
            "Q" => Ok(Signal::Q),
            "S" => Ok(Signal::S),
            other => Err(Error::Config(format!(
                "unknown signal {other:?} (expected one of I, P, Q, S)"
            ))),
        }
    }
}

/// The measured signals of one entity (aggregate, appliance, or noise).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channels(BTreeMap<Signal, Vec<f64>>);

impl Channels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, signal: Signal) -> Option<&[f64]> {
        self.0.get(&signal).map(Vec::as_slice)
    }

    pub fn insert(&mut self, signal: Signal, values: Vec<f64>) {
        self.0.insert(signal, values);
    }

    pub fn signals(&self) -> impl Iterator<Item = Signal> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Signal, &[f64])> {
        self.0.iter().map(|(s, v)| (*s, v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.0.values_mut()
    }

    fn slice(&self, start: usize, end: usize) -> Channels {
        Channels(
            self.0
                .iter()
                .map(|(s, v)| (*s, v[start..end].to_vec()))
                .collect(),
        )
    }
}

/// Multi-channel meter recording on a uniform one-minute grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeterSeries {
    /// Epoch seconds, strictly increasing by [`SAMPLE_PERIOD_SECS`].
    pub timestamps: Vec<i64>,
    pub aggregate: Channels,
    /// Sub-metered appliances in column order.
    pub appliances: Vec<(String, Channels)>,
    /// Residual `aggregate − Σ appliances` when known (synthetic data).
    pub noise: Option<Channels>,
}

impl MeterSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn appliance(&self, name: &str) -> Option<&Channels> {
        self.appliances
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
    }

    pub fn appliance_names(&self) -> Vec<&str> {
        self.appliances.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Checks grid uniformity, channel lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for w in self.timestamps.windows(2) {
            if w[1] - w[0] != SAMPLE_PERIOD_SECS {
                return Err(Error::Data(format!(
                    "timestamps {} -> {} are not on the one-minute grid",
                    w[0], w[1]
                )));
            }
        }
        let entities = std::iter::once(("agg", &self.aggregate))
            .chain(self.appliances.iter().map(|(n, c)| (n.as_str(), c)))
            .chain(self.noise.iter().map(|c| ("noise", c)));
        for (name, ch) in entities {
            for (sig, v) in ch.iter() {
                if v.len() != n {
                    return Err(Error::Data(format!(
                        "{name}_{sig} has {} samples, series has {n}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Data(format!("{name}_{sig} has non-finite values")));
                }
            }
        }
        Ok(())
    }

    /// The samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<MeterSeries> {
        if start > end || end > self.len() {
            return Err(Error::Data(format!(
                "slice {start}..{end} out of range for {} samples",
                self.len()
            )));
        }
        Ok(MeterSeries {
            timestamps: self.timestamps[start..end].to_vec(),
            aggregate: self.aggregate.slice(start, end),
            appliances: self
                .appliances
                .iter()
                .map(|(n, c)| (n.clone(), c.slice(start, end)))
                .collect(),
            noise: self.noise.as_ref().map(|c| c.slice(start, end)),
        })
    }

    /// Column layout used by [`MeterSeries::write_csv`]: `(header, channels, signal)`.
    fn columns(&self) -> Vec<(String, &Channels, Signal)> {
        let entities = std::iter::once(("agg", &self.aggregate))
            .chain(self.appliances.iter().map(|(n, c)| (n.as_str(), c)))
            .chain(self.noise.iter().map(|c| ("noise", c)));
        entities
            .flat_map(|(name, ch)| ch.signals().map(move |s| (format!("{name}_{s}"), ch, s)))
            .collect()
    }

    /// Writes `timestamp,<entity>_<signal>,…` CSV with epoch-second timestamps.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let cols = self.columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(cols.iter().map(|(h, _, _)| h.clone()));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for (t, ts) in self.timestamps.iter().enumerate() {
            row.clear();
            row.push(ts.to_string());
            for (_, ch, sig) in &cols {
                row.push(ch.get(*sig).expect("column signal present")[t].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_parsing() {
        assert_eq!("Q".parse::<Signal>().unwrap(), Signal::Q);
        assert!("X".parse::<Signal>().is_err());
        assert_eq!(Signal::S.to_string(), "S");
    }

    #[test]
    fn validate_catches_length_mismatch() {
        let mut agg = Channels::new();
        agg.insert(Signal::P, vec![1.0, 2.0]);
        let s = MeterSeries {
            timestamps: vec![0, 60, 120],
            aggregate: agg,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
