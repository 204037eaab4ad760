use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    build_scenario, ingest_csv, synthesize_household, ChannelMap, HouseholdConfig, MeterSeries,
    NormalizedData, ScaleRecord, Scenario, Signal,
};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig};
use crate::training::{
    cross_validate, evaluate_span, split_point, train, CrossValidation, SpanEvaluation,
    TrainConfig, TrainOutcome, TrainingSet,
};

/// Where the meter data comes from: a CSV file or a synthetic household.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV in the `timestamp,<entity>_<signal>,...` layout. Relative paths
    /// are resolved against the config file's directory.
    pub path: Option<PathBuf>,
    /// Entity whose columns hold the aggregate (default `agg`).
    pub aggregate: Option<String>,
    pub synthetic: Option<HouseholdConfig>,
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.path, &self.synthetic) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Config(
                "data: give exactly one of data.path and data.synthetic".into(),
            )),
        }
    }

    /// Loads the series; ingestion warnings are returned alongside.
    pub fn load(&self) -> Result<(MeterSeries, Vec<String>)> {
        self.validate()?;
        if let Some(cfg) = &self.synthetic {
            return Ok((synthesize_household(cfg)?, Vec::new()));
        }
        let path = self.path.as_ref().expect("validated");
        let map = match &self.aggregate {
            Some(agg) => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let mut reader = csv::Reader::from_reader(file);
                let headers = reader.headers()?.clone();
                Some(ChannelMap::from_header_with_aggregate(headers.iter(), agg))
            }
            None => None,
        };
        let ingested = ingest_csv(path, map.as_ref())?;
        Ok((ingested.series, ingested.warnings))
    }
}

/// Network topology minus the dimensions a scenario fixes (input channels,
/// loads, masked channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub block_widths: Vec<usize>,
    pub dilations: Vec<usize>,
    pub filter_length: usize,
    pub dropout_rate: f64,
    pub input_dense_width: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let c = NetworkConfig::new(1, 1);
        Self {
            block_widths: c.block_widths,
            dilations: c.dilations,
            filter_length: c.filter_length,
            dropout_rate: c.dropout_rate,
            input_dense_width: c.input_dense_width,
        }
    }
}

impl NetworkSpec {
    pub fn for_scenario(&self, scenario: &Scenario) -> Result<NetworkConfig> {
        scenario.validate()?;
        let config = NetworkConfig {
            input_channels: scenario.input_signals.len(),
            output_loads: scenario.target_loads.len(),
            block_widths: self.block_widths.clone(),
            filter_length: self.filter_length,
            dilations: self.dilations.clone(),
            dropout_rate: self.dropout_rate,
            input_dense_width: self.input_dense_width,
            mask_input_channel: scenario.mask_channel()?,
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_train_fraction() -> f64 {
    0.9
}

/// A complete experiment: data, scenario, topology, and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub training: TrainConfig,
    /// Leading fraction of the timeline used for training; the rest tests.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seeds weight initialization; the training seed is separate.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.data.validate()?;
        config.scenario.validate()?;
        Ok(config)
    }

    /// Parses a config file and resolves `data.path` relative to it.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(p), Some(dir)) = (&config.data.path, path.parent()) {
            if p.is_relative() {
                config.data.path = Some(dir.join(p));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets both the initialization and the training seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.seed = seed;
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        self.network.for_scenario(&self.scenario)
    }
}

/// Everything needed to apply a trained network to new data, stored in the
/// checkpoint next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub scenario: Scenario,
    /// Per-input-channel normalization scales.
    pub scales: Vec<f64>,
}

impl ModelMeta {
    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_table(table: &toml::Table) -> Result<Self> {
        table
            .clone()
            .try_into()
            .map_err(|e| Error::Checkpoint(format!("model metadata: {e}")))
    }

    /// Normalizes `series` for this model with the stored scales.
    pub fn prepare(&self, series: &MeterSeries) -> Result<NormalizedData> {
        let data = build_scenario(series, &self.scenario)?;
        NormalizedData::with_record(
            &data,
            self.scenario.mask_channel()?,
            ScaleRecord {
                scales: self.scales.clone(),
            },
        )
    }
}

/// Scenario data normalized with scales fitted on `fit_span` only.
pub fn prepare(
    series: &MeterSeries,
    scenario: &Scenario,
    fit_span: Range<usize>,
) -> Result<(NormalizedData, ModelMeta, Vec<String>)> {
    let data = build_scenario(series, scenario)?;
    let (record, warnings) =
        ScaleRecord::fit(&data.input.slice_time(fit_span.start, fit_span.end)?)?;
    let meta = ModelMeta {
        scenario: scenario.clone(),
        scales: record.scales.clone(),
    };
    let normalized = NormalizedData::with_record(&data, scenario.mask_channel()?, record)?;
    Ok((normalized, meta, warnings))
}

/// Result of a train/test holdout run.
#[derive(Debug, Clone)]
pub struct HoldoutRun {
    pub outcome: TrainOutcome,
    pub meta: ModelMeta,
    pub data: NormalizedData,
    /// First test sample; training used `0..split`.
    pub split: usize,
    /// Best network on the held-out tail.
    pub test: SpanEvaluation,
    pub warnings: Vec<String>,
}

impl HoldoutRun {
    /// Best network on its own training span.
    pub fn evaluate_train(&self) -> Result<SpanEvaluation> {
        evaluate_span(&self.outcome.best, &self.data, 0..self.split)
    }
}

/// Trains on the leading `train_fraction` of `series` and tests on the tail.
pub fn run_holdout(config: &ExperimentConfig, series: &MeterSeries) -> Result<HoldoutRun> {
    let net_config = config.network_config()?;
    let split = split_point(
        series.len(),
        config.train_fraction,
        config.training.window_length,
    )?;
    let (data, meta, warnings) = prepare(series, &config.scenario, 0..split)?;
    let net = Network::build(net_config, config.seed)?;
    let set = TrainingSet::plan(&data, &[0..split], &config.training, net.receptive_field())?;
    log::info!(
        "training on {split} samples ({} windows), testing on {}",
        set.windows.len(),
        series.len() - split
    );
    let outcome = train(net, &data, &set, &config.training)?;
    let test = evaluate_span(&outcome.best, &data, split..data.len())?;
    Ok(HoldoutRun {
        outcome,
        meta,
        data,
        split,
        test,
        warnings,
    })
}

/// k-fold cross-validation over the whole series. Scales are fitted on the
/// full series.
pub fn run_cross_validation(
    config: &ExperimentConfig,
    series: &MeterSeries,
    k: usize,
) -> Result<CrossValidation> {
    let net_config = config.network_config()?;
    let (data, _, _) = prepare(series, &config.scenario, 0..series.len())?;
    cross_validate(
        || Network::build(net_config.clone(), config.seed),
        &data,
        k,
        &config.training,
    )
}

/// Input-signal subsets of the signal comparison table.
pub fn matrix_subsets() -> Vec<Vec<Signal>> {
    use Signal::*;
    vec![
        vec![I],
        vec![P],
        vec![Q],
        vec![S],
        vec![P, Q],
        vec![I, P, Q, S],
    ]
}

/// Output signal for an input subset: the signal itself for single inputs,
/// otherwise `P` when present, else `I`, else the first input.
pub fn matrix_output(inputs: &[Signal]) -> Signal {
    if inputs.len() == 1 {
        return inputs[0];
    }
    [Signal::P, Signal::I]
        .into_iter()
        .find(|s| inputs.contains(s))
        .unwrap_or(inputs[0])
}
