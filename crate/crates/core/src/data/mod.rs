//! Meter data: the series model, CSV ingestion, scenario construction,
//! power-of-two normalization, training windows and the synthetic household
//! generator.

mod ingest;
mod normalize;
mod scenario;
mod series;
pub mod synth;
mod window;

pub use ingest::{
    ingest_csv, ingest_reader, ChannelMap, ColumnBinding, Entity, Ingested, MAX_FILLED_FRACTION,
    MAX_GAP_SAMPLES,
};
pub use normalize::{next_power_of_two, NormalizedData, ScaleRecord};
pub use scenario::{
    build_scenario, noise_fraction, Mode, Scenario, ScenarioData, DEFERRABLE_LOADS,
};
pub use series::{Channels, MeterSeries, Signal, SAMPLE_PERIOD_SECS};
pub use synth::{synthesize_household, HouseholdConfig, PowerSample, SyntheticAppliance};
pub use window::{window, window_starts};
