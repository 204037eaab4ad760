use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::{Channels, MeterSeries, Signal, SAMPLE_PERIOD_SECS};
use crate::error::{Error, Result};

/// Longest run of missing samples that is filled rather than rejected.
pub const MAX_GAP_SAMPLES: usize = 5;
/// Largest tolerated fraction of filled samples in the final series.
pub const MAX_FILLED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entity {
    Aggregate,
    Noise,
    Appliance(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnBinding {
    pub column: String,
    pub entity: Entity,
    pub signal: Signal,
}

/// Binds CSV columns to `(entity, signal)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelMap {
    pub bindings: Vec<ColumnBinding>,
}

impl ChannelMap {
    /// Derives bindings from `<entity>_<signal>` column names. `agg` is the
    /// aggregate meter and `noise` the residual; anything else is an
    /// appliance. Columns without a recognized signal suffix are skipped.
    pub fn from_header<'a>(headers: impl IntoIterator<Item = &'a str>) -> Self {
        Self::from_header_with_aggregate(headers, "agg")
    }

    /// Like [`ChannelMap::from_header`], with a different entity name standing
    /// for the aggregate meter (e.g. `WHE` for whole-house readings).
    pub fn from_header_with_aggregate<'a>(
        headers: impl IntoIterator<Item = &'a str>,
        aggregate: &str,
    ) -> Self {
        let bindings = headers
            .into_iter()
            .skip(1)
            .filter_map(|h| {
                let (entity, sig) = h.rsplit_once('_')?;
                let signal = sig.parse().ok()?;
                let entity = if entity == aggregate || entity == "agg" {
                    Entity::Aggregate
                } else if entity == "noise" {
                    Entity::Noise
                } else {
                    Entity::Appliance(entity.to_string())
                };
                Some(ColumnBinding {
                    column: h.to_string(),
                    entity,
                    signal,
                })
            })
            .collect();
        Self { bindings }
    }
}

/// An ingested series and any non-fatal conditions found on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub series: MeterSeries,
    pub warnings: Vec<String>,
}

pub fn ingest_csv(path: &Path, map: Option<&ChannelMap>) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, map).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a headed CSV whose first column is a timestamp (epoch seconds or
/// ISO-8601). Short gaps are filled by holding the previous row.
pub fn ingest_reader<R: Read>(reader: R, map: Option<&ChannelMap>) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let map = match map {
        Some(m) => m.clone(),
        None => ChannelMap::from_header(headers.iter()),
    };
    if map.bindings.is_empty() {
        return Err(Error::Data("no `<entity>_<signal>` columns found".into()));
    }
    let mut indices = Vec::with_capacity(map.bindings.len());
    for b in &map.bindings {
        let idx = headers
            .iter()
            .position(|h| h == b.column)
            .ok_or_else(|| Error::Data(format!("missing column {:?}", b.column)))?;
        if idx == 0 {
            return Err(Error::Data(format!(
                "column {:?} is the timestamp column",
                b.column
            )));
        }
        indices.push(idx);
    }

    let mut timestamps: Vec<i64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); indices.len()];
    let mut warnings = Vec::new();
    let mut filled = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let ts_field = rec.get(0).unwrap_or("");
        let ts = parse_timestamp(ts_field)
            .ok_or_else(|| Error::Data(format!("row {row}: bad timestamp {ts_field:?}")))?;
        let values = indices
            .iter()
            .zip(&map.bindings)
            .map(|(&i, b)| {
                let field = rec.get(i).unwrap_or("");
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Data(format!("row {row}: bad value {field:?} in {}", b.column))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;

        if let Some(&prev) = timestamps.last() {
            let dt = ts - prev;
            if dt <= 0 {
                return Err(Error::Data(format!(
                    "row {row}: timestamps are not strictly increasing ({prev} then {ts})"
                )));
            }
            if dt % SAMPLE_PERIOD_SECS != 0 {
                return Err(Error::Data(format!(
                    "row {row}: timestamp {ts} is off the one-minute grid"
                )));
            }
            let missing = (dt / SAMPLE_PERIOD_SECS - 1) as usize;
            if missing > MAX_GAP_SAMPLES {
                return Err(Error::Data(format!(
                    "row {row}: gap of {missing} samples exceeds the {MAX_GAP_SAMPLES}-sample limit"
                )));
            }
            if missing > 0 {
                let msg = format!(
                    "filled {missing} missing sample(s) before {ts} by holding the previous value"
                );
                log::warn!("{msg}");
                warnings.push(msg);
                for k in 1..=missing {
                    timestamps.push(prev + k as i64 * SAMPLE_PERIOD_SECS);
                    for col in &mut columns {
                        let last = *col.last().expect("previous row present");
                        col.push(last);
                    }
                }
                filled += missing;
            }
        }
        timestamps.push(ts);
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let fraction = filled as f64 / timestamps.len() as f64;
    if fraction > MAX_FILLED_FRACTION {
        return Err(Error::Data(format!(
            "{:.1}% of samples are gaps (limit {:.0}%)",
            100.0 * fraction,
            100.0 * MAX_FILLED_FRACTION
        )));
    }

    let mut series = MeterSeries {
        timestamps,
        ..Default::default()
    };
    for (b, values) in map.bindings.iter().zip(columns) {
        let target = match &b.entity {
            Entity::Aggregate => &mut series.aggregate,
            Entity::Noise => series.noise.get_or_insert_with(Channels::new),
            Entity::Appliance(name) => {
                let pos = match series.appliances.iter().position(|(n, _)| n == name) {
                    Some(p) => p,
                    None => {
                        series.appliances.push((name.clone(), Channels::new()));
                        series.appliances.len() - 1
                    }
                };
                &mut series.appliances[pos].1
            }
        };
        if target.get(b.signal).is_some() {
            return Err(Error::Data(format!(
                "column {:?} duplicates an already bound channel",
                b.column
            )));
        }
        target.insert(b.signal, values);
    }
    series.validate()?;
    Ok(Ingested { series, warnings })
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return (v.is_finite() && v.fract() == 0.0).then_some(v as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<Ingested> {
        ingest_reader(text.as_bytes(), None)
    }

    #[test]
    fn three_row_fixture() {
        let csv = "timestamp,agg_I,agg_P,agg_Q,agg_S\n\
                   0,1,100,10,100.5\n60,2,200,20,201\n120,3,300,30,301.5\n";
        let got = ingest(csv).unwrap();
        assert!(got.warnings.is_empty());
        assert_eq!(got.series.len(), 3);
        assert_eq!(
            got.series.aggregate.get(Signal::P).unwrap(),
            &[100., 200., 300.]
        );
        assert_eq!(got.series.aggregate.signals().count(), 4);
    }

    #[test]
    fn iso_timestamps_and_appliances() {
        let csv = "time,agg_P,dryer_P,dryer_I,noise_P\n\
                   2012-04-01T00:00:00Z,5,4,1,1\n2012-04-01 00:01:00,6,5,1,1\n";
        let s = ingest(csv).unwrap().series;
        assert_eq!(s.timestamps, vec![1_333_238_400, 1_333_238_460]);
        assert_eq!(
            s.appliance("dryer").unwrap().get(Signal::I).unwrap(),
            &[1., 1.]
        );
        assert!(s.noise.is_some());
    }

    #[test]
    fn shuffled_rows_rejected() {
        let csv = "timestamp,agg_P\n60,1\n0,2\n120,3\n";
        let err = ingest(csv).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn one_minute_gap_is_held() {
        let mut csv = String::from("timestamp,agg_P\n");
        for (i, t) in [0, 60, 180, 240].iter().enumerate() {
            csv.push_str(&format!("{t},{}\n", (i + 1) * 10));
        }
        for t in 5..40 {
            csv.push_str(&format!("{},1\n", t * 60));
        }
        let got = ingest(&csv).unwrap();
        assert_eq!(got.warnings.len(), 1);
        assert_eq!(&got.series.timestamps[..5], &[0, 60, 120, 180, 240]);
        assert_eq!(
            &got.series.aggregate.get(Signal::P).unwrap()[..5],
            &[10., 20., 20., 30., 40.]
        );
    }

    #[test]
    fn long_gap_rejected() {
        let csv = "timestamp,agg_P\n0,1\n420,2\n";
        assert!(ingest(csv).unwrap_err().to_string().contains("gap of 6"));
    }

    #[test]
    fn too_many_gaps_rejected() {
        // one filled sample in 3 is far above 5%
        let csv = "timestamp,agg_P\n0,1\n120,2\n";
        assert!(ingest(csv).unwrap_err().to_string().contains("gaps"));
    }

    #[test]
    fn missing_mapped_column_rejected() {
        let map = ChannelMap {
            bindings: vec![ColumnBinding {
                column: "WHE_P".into(),
                entity: Entity::Aggregate,
                signal: Signal::P,
            }],
        };
        let err = ingest_reader("timestamp,agg_P\n0,1\n".as_bytes(), Some(&map)).unwrap_err();
        assert!(err.to_string().contains("WHE_P"));
    }

    #[test]
    fn aggregate_alias() {
        let csv = "ts,WHE_P,HPE_P\n0,3,1\n";
        let rdr = csv::Reader::from_reader(csv.as_bytes())
            .headers()
            .unwrap()
            .clone();
        let map = ChannelMap::from_header_with_aggregate(rdr.iter(), "WHE");
        let s = ingest_reader(csv.as_bytes(), Some(&map)).unwrap().series;
        assert_eq!(s.aggregate.get(Signal::P).unwrap(), &[3.0]);
        assert_eq!(s.appliance_names(), vec!["HPE"]);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ingest("timestamp,agg_P\n0,abc\n").is_err());
        assert!(ingest("timestamp,agg_P\n0,NaN\n").is_err());
        assert!(ingest("timestamp,agg_P\n").is_err());
        assert!(ingest("timestamp,foo\n0,1\n").is_err());
    }
}
