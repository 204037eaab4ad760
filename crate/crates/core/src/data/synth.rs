//! Synthetic households: per-minute Markov state machines whose states carry
//! an active-power level and a phase angle. Each appliance's `I, P, Q, S`
//! follow from `S = P / cos θ`, `Q = S · sin θ`, `I = S / V`; the aggregate
//! is the channel-wise sum of all appliances plus Gaussian jitter.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Channels, MeterSeries, Signal, SAMPLE_PERIOD_SECS};
use crate::error::{Error, Result};

/// 2012-04-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_333_238_400;
pub const SAMPLES_PER_DAY: usize = 1440;

/// Instantaneous electrical quantities of one load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub current: f64,
    pub voltage: f64,
    pub phase: f64,
    pub apparent: f64,
    pub active: f64,
    pub reactive: f64,
}

impl PowerSample {
    /// Derives the sample from active power and phase angle at a fixed voltage.
    pub fn from_active(active: f64, phase: f64, voltage: f64) -> Result<Self> {
        check_phase(phase)?;
        if !(active >= 0.0) || !active.is_finite() {
            return Err(Error::Config(format!(
                "active power must be >= 0, got {active}"
            )));
        }
        if !(voltage > 0.0) || !voltage.is_finite() {
            return Err(Error::Config(format!("voltage must be > 0, got {voltage}")));
        }
        let apparent = active / phase.cos();
        Ok(Self {
            current: apparent / voltage,
            voltage,
            phase,
            apparent,
            active,
            reactive: apparent * phase.sin(),
        })
    }

    pub fn get(&self, signal: Signal) -> f64 {
        match signal {
            Signal::I => self.current,
            Signal::P => self.active,
            Signal::Q => self.reactive,
            Signal::S => self.apparent,
        }
    }
}

fn check_phase(phase: f64) -> Result<()> {
    if !(0.0..FRAC_PI_2).contains(&phase) {
        return Err(Error::Config(format!(
            "phase angle must lie in [0, π/2), got {phase}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceState {
    #[serde(default)]
    pub name: String,
    /// Active power, watts.
    pub power: f64,
    /// Phase angle, radians.
    #[serde(default)]
    pub phase: f64,
    /// Std-dev of per-minute active-power fluctuation while in this state.
    #[serde(default)]
    pub power_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticAppliance {
    pub name: String,
    #[serde(rename = "state")]
    pub states: Vec<ApplianceState>,
    /// Row-stochastic per-minute transition matrix.
    pub transitions: Vec<Vec<f64>>,
    #[serde(default)]
    pub initial_state: usize,
}

impl SyntheticAppliance {
    /// Off/on appliance switching on with probability `p_on` and off with
    /// probability `p_off` each minute.
    pub fn two_state(name: &str, power: f64, phase: f64, p_on: f64, p_off: f64) -> Self {
        Self {
            name: name.to_string(),
            states: vec![
                ApplianceState {
                    name: "off".into(),
                    power: 0.0,
                    phase: 0.0,
                    power_std: 0.0,
                },
                ApplianceState {
                    name: "on".into(),
                    power,
                    phase,
                    power_std: 0.0,
                },
            ],
            transitions: vec![vec![1.0 - p_on, p_on], vec![p_off, 1.0 - p_off]],
            initial_state: 0,
        }
    }

    /// A load that never switches off.
    pub fn constant(name: &str, power: f64, phase: f64) -> Self {
        Self {
            name: name.to_string(),
            states: vec![ApplianceState {
                name: "on".into(),
                power,
                phase,
                power_std: 0.0,
            }],
            transitions: vec![vec![1.0]],
            initial_state: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("appliance {:?}: {m}", self.name)));
        if self.name.is_empty()
            || self.name.contains(['_', ','])
            || self.name == "agg"
            || self.name == "noise"
        {
            return fail(
                "name must be non-empty, must not contain '_' or ',', and must not be agg/noise"
                    .into(),
            );
        }
        let n = self.states.len();
        if n == 0 {
            return fail("needs at least one state".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            if !(s.power >= 0.0) || !s.power.is_finite() {
                return fail(format!("state {i} power must be >= 0"));
            }
            if !(s.power_std >= 0.0) || !s.power_std.is_finite() {
                return fail(format!("state {i} power_std must be >= 0"));
            }
            check_phase(s.phase).or_else(|e| fail(format!("state {i}: {e}")))?;
        }
        if self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return fail(format!("transitions must be a {n}x{n} matrix"));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return fail(format!("transition row {i} has entries outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return fail(format!("transition row {i} sums to {sum}, not 1"));
            }
        }
        if self.initial_state >= n {
            return fail(format!("initial_state {} out of range", self.initial_state));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Std-dev of the additive aggregate jitter in W / var / VA; the current
    /// channel uses `jitter_std / v_nominal`.
    #[serde(default)]
    pub jitter_std: f64,
}

/// Synthetic household description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdConfig {
    #[serde(default)]
    pub seed: u64,
    pub days: usize,
    #[serde(default = "default_voltage")]
    pub v_nominal: f64,
    #[serde(default = "default_start")]
    pub start: i64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default, rename = "appliance")]
    pub appliances: Vec<SyntheticAppliance>,
}

fn default_voltage() -> f64 {
    120.0
}

fn default_start() -> i64 {
    DEFAULT_START
}

impl HouseholdConfig {
    pub fn new(appliances: Vec<SyntheticAppliance>, days: usize, seed: u64) -> Self {
        Self {
            seed,
            days,
            v_nominal: default_voltage(),
            start: default_start(),
            noise: NoiseModel::default(),
            appliances,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("household config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("household config: {e}")))
    }

    /// A house with the five deferrable loads (`FRE`, `HPE`, `WOE`, `CDE`,
    /// `DWE`) plus other loads that carry about 60% of the aggregate energy
    /// in expectation.
    pub fn deferrable_house(days: usize, seed: u64) -> Self {
        let a = SyntheticAppliance::two_state;
        let mut h = Self::new(
            vec![
                a("FRE", 450.0, 0.35, 0.02, 0.04),
                a("HPE", 1900.0, 0.45, 0.01, 0.03),
                a("WOE", 2400.0, 0.0, 0.002, 0.03),
                a("CDE", 4800.0, 0.05, 0.001, 0.02),
                a("DWE", 1100.0, 0.2, 0.002, 0.02),
                SyntheticAppliance::constant("base", 400.0, 0.3),
                a("fridge", 150.0, 0.6, 0.03, 0.05),
                a("lights", 600.0, 0.1, 0.01, 0.01),
                a("waterheater", 3000.0, 0.0, 0.006, 0.014),
            ],
            days,
            seed,
        );
        h.noise.jitter_std = 5.0;
        h
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Config("days must be >= 1".into()));
        }
        if !(self.v_nominal > 0.0) || !self.v_nominal.is_finite() {
            return Err(Error::Config("v_nominal must be > 0".into()));
        }
        if !(self.noise.jitter_std >= 0.0) || !self.noise.jitter_std.is_finite() {
            return Err(Error::Config("noise.jitter_std must be >= 0".into()));
        }
        for (i, a) in self.appliances.iter().enumerate() {
            a.validate()?;
            if self.appliances[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("duplicate appliance {:?}", a.name)));
            }
        }
        Ok(())
    }
}

/// Generates a household series, fully determined by the config (including its seed).
pub fn synthesize_household(config: &HouseholdConfig) -> Result<MeterSeries> {
    config.validate()?;
    let t = config.days * SAMPLES_PER_DAY;
    let v = config.v_nominal;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let timestamps: Vec<i64> = (0..t)
        .map(|i| config.start + i as i64 * SAMPLE_PERIOD_SECS)
        .collect();

    let mut aggregate = zero_channels(t);
    let mut appliances = Vec::with_capacity(config.appliances.len());
    for app in &config.appliances {
        let mut ch = vec![vec![0.0; t]; 4];
        let mut state = app.initial_state;
        for i in 0..t {
            let st = &app.states[state];
            let mut p = st.power;
            if st.power_std > 0.0 {
                let n = Normal::new(0.0, st.power_std).expect("validated std");
                p = (p + n.sample(&mut rng)).max(0.0);
            }
            let sample = PowerSample::from_active(p, st.phase, v)?;
            for (c, sig) in ch.iter_mut().zip(Signal::ALL) {
                c[i] = sample.get(sig);
            }
            state = next_state(&app.transitions[state], &mut rng);
        }
        let mut channels = Channels::new();
        for (c, sig) in ch.into_iter().zip(Signal::ALL) {
            channels.insert(sig, c);
        }
        appliances.push((app.name.clone(), channels));
    }

    let mut noise = zero_channels(t);
    if config.noise.jitter_std > 0.0 {
        let n = Normal::new(0.0, config.noise.jitter_std).expect("validated std");
        for (sig, col) in Signal::ALL.iter().zip(noise.values_mut()) {
            let scale = if *sig == Signal::I { 1.0 / v } else { 1.0 };
            for x in col.iter_mut() {
                *x = n.sample(&mut rng) * scale;
            }
        }
    }

    for (agg, sig) in aggregate.values_mut().zip(Signal::ALL) {
        for (_, ch) in &appliances {
            for (a, b) in agg
                .iter_mut()
                .zip(ch.get(sig).expect("all signals synthesized"))
            {
                *a += b;
            }
        }
        for (a, b) in agg.iter_mut().zip(noise.get(sig).expect("all signals")) {
            *a += b;
        }
    }

    Ok(MeterSeries {
        timestamps,
        aggregate,
        appliances,
        noise: Some(noise),
    })
}

fn zero_channels(t: usize) -> Channels {
    let mut c = Channels::new();
    for s in Signal::ALL {
        c.insert(s, vec![0.0; t]);
    }
    c
}

fn next_state<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the last cumulative value
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
