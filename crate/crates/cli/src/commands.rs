use std::fs;
use std::io::{self, BufRead, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wavenilm::data::{
    synthesize_household, Channels, HouseholdConfig, MeterSeries, NormalizedData, Signal,
};
use wavenilm::experiment::{
    matrix_output, matrix_subsets, run_cross_validation, run_holdout, ExperimentConfig, HoldoutRun,
    ModelMeta,
};
use wavenilm::metrics::AccuracyReport;
use wavenilm::network::{load_checkpoint, save_checkpoint};
use wavenilm::streaming::StreamState;
use wavenilm::training::{evaluate_span, split_point, EpochRecord, SpanEvaluation};

use crate::Split;

/// 1 for problems with the user's inputs, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<wavenilm::Error>() {
            return match e {
                wavenilm::Error::Shape(_)
                | wavenilm::Error::NonFinite(_)
                | wavenilm::Error::Diverged { .. } => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = seed {
        config.reseed(seed);
    }
    Ok(config)
}

fn default_out(config: &Path, suffix: &str) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from("runs").join(format!("{stem}{suffix}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_series(config: &ExperimentConfig) -> Result<MeterSeries> {
    let (series, warnings) = config.data.load()?;
    if !warnings.is_empty() {
        log::warn!("{} ingestion warning(s)", warnings.len());
    }
    Ok(series)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "epoch",
        "train_loss",
        "validation_loss",
        "validation_accuracy",
    ])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            opt(r.validation_loss),
            opt(r.validation_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, report: &AccuracyReport) -> Result<()> {
    write_file(&dir.join("report.txt"), report.to_key_value())?;
    let mut w = csv_writer(&dir.join("report.csv"))?;
    w.write_record(report.csv_header())?;
    w.write_record(report.csv_row())?;
    w.flush()?;
    Ok(())
}

/// Model inputs (as `agg_<signal>`) and clamped per-load estimates over
/// `span`, in the same CSV layout that ingestion reads.
fn write_predictions(
    path: &Path,
    data: &NormalizedData,
    meta: &ModelMeta,
    span: Range<usize>,
    eval: &SpanEvaluation,
) -> Result<()> {
    let (_, _, c) = data.input.dims3()?;
    let mut aggregate = Channels::new();
    for (ci, sig) in meta.scenario.input_signals.iter().enumerate() {
        let scale = data.record.scales[ci];
        let values = span
            .clone()
            .map(|t| data.input.at3(0, t, ci) * scale)
            .collect();
        aggregate.insert(*sig, values);
    }
    debug_assert_eq!(c, meta.scenario.input_signals.len());
    let k = data.load_names.len();
    let appliances = data
        .load_names
        .iter()
        .enumerate()
        .map(|(ki, name)| {
            let mut ch = Channels::new();
            ch.insert(
                meta.scenario.output_signal,
                eval.predictions
                    .data()
                    .iter()
                    .skip(ki)
                    .step_by(k)
                    .copied()
                    .collect(),
            );
            (name.clone(), ch)
        })
        .collect();
    let series = MeterSeries {
        timestamps: data.timestamps[span].to_vec(),
        aggregate,
        appliances,
        noise: None,
    };
    let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    series.write_csv(io::BufWriter::new(file))?;
    Ok(())
}

fn checkpoint_meta(run: &HoldoutRun, config: &ExperimentConfig) -> Result<toml::Table> {
    let mut meta = run.meta.to_table()?;
    meta.insert("best_epoch".into(), (run.outcome.best_epoch as i64).into());
    meta.insert("seed".into(), (config.seed as i64).into());
    Ok(meta)
}

pub fn train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(config_path, seed)?;
    let dir = out.unwrap_or_else(|| default_out(config_path, ""));
    create_dir(&dir)?;
    write_file(&dir.join("config.toml"), config.to_toml()?)?;
    let series = load_series(&config)?;
    let run = run_holdout(&config, &series)?;
    write_history(&dir.join("history.csv"), &run.outcome.history)?;
    let meta = checkpoint_meta(&run, &config)?;
    save_checkpoint(&dir.join("best.ckpt"), &run.outcome.best, &meta)?;
    save_checkpoint(&dir.join("final.ckpt"), &run.outcome.last, &meta)?;
    write_report(&dir, &run.test.report)?;
    if let Some(epoch) = run.outcome.diverged_at {
        return Err(wavenilm::Error::Diverged { epoch })
            .context(format!("best.ckpt holds epoch {}", run.outcome.best_epoch));
    }
    println!(
        "best epoch {} of {}; held-out estimated accuracy {:.4}; run directory {}",
        run.outcome.best_epoch,
        run.outcome.history.len(),
        run.test.report.estimated_accuracy_total,
        dir.display()
    );
    Ok(())
}

pub fn eval(
    config_path: &Path,
    checkpoint: &Path,
    split: Split,
    out: Option<PathBuf>,
) -> Result<()> {
    let config = load_config(config_path, None)?;
    let (net, table) = load_checkpoint(checkpoint)?;
    let meta = ModelMeta::from_table(&table)?;
    let series = load_series(&config)?;
    let data = meta.prepare(&series)?;
    let cut = split_point(
        series.len(),
        config.train_fraction,
        config.training.window_length,
    )?;
    let span = match split {
        Split::Train => 0..cut,
        Split::Test => cut..series.len(),
        Split::All => 0..series.len(),
    };
    let eval = evaluate_span(&net, &data, span.clone())?;
    let dir = out.unwrap_or_else(|| {
        let name = match split {
            Split::Train => "eval-train",
            Split::Test => "eval-test",
            Split::All => "eval-all",
        };
        checkpoint.parent().unwrap_or(Path::new(".")).join(name)
    });
    create_dir(&dir)?;
    write_report(&dir, &eval.report)?;
    write_predictions(&dir.join("predictions.csv"), &data, &meta, span, &eval)?;
    print!("{}", eval.report.to_key_value());
    Ok(())
}

pub fn matrix(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let base = load_config(config_path, seed)?;
    let dir = out.unwrap_or_else(|| default_out(config_path, "-matrix"));
    create_dir(&dir)?;
    let series = load_series(&base)?;
    let mut table = csv_writer(&dir.join("matrix.csv"))?;
    let mut curves = csv_writer(&dir.join("curves.csv"))?;
    curves.write_record([
        "inputs",
        "epoch",
        "train_loss",
        "validation_loss",
        "validation_accuracy",
    ])?;
    let mut header_written = false;
    for inputs in matrix_subsets() {
        let mut config = base.clone();
        config.scenario.input_signals = inputs.clone();
        config.scenario.output_signal = matrix_output(&inputs);
        let label: String = inputs
            .iter()
            .map(Signal::to_string)
            .collect::<Vec<_>>()
            .join("+");
        log::info!("matrix cell {label} -> {}", config.scenario.output_signal);
        let run = run_holdout(&config, &series).with_context(|| format!("matrix cell {label}"))?;
        if !header_written {
            let mut h = vec![
                "inputs".to_string(),
                "output".into(),
                "mode".into(),
                "best_epoch".into(),
            ];
            h.extend(run.test.report.csv_header());
            table.write_record(&h)?;
            header_written = true;
        }
        let mode = toml::Value::try_from(config.scenario.mode)?;
        let mut row = vec![
            label.clone(),
            config.scenario.output_signal.to_string(),
            mode.as_str().unwrap_or_default().to_string(),
            run.outcome.best_epoch.to_string(),
        ];
        row.extend(run.test.report.csv_row());
        table.write_record(&row)?;
        table.flush()?;
        for r in &run.outcome.history {
            curves.write_record([
                label.clone(),
                r.epoch.to_string(),
                r.train_loss.to_string(),
                opt(r.validation_loss),
                opt(r.validation_accuracy),
            ])?;
        }
        curves.flush()?;
        println!("{label}: {:.4}", run.test.report.estimated_accuracy_total);
    }
    Ok(())
}

pub fn cross_validate(
    config_path: &Path,
    folds: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let config = load_config(config_path, seed)?;
    let dir = out.unwrap_or_else(|| default_out(config_path, "-cv"));
    create_dir(&dir)?;
    let series = load_series(&config)?;
    let cv = run_cross_validation(&config, &series, folds)?;
    let mean = cv.mean.as_ref().context("every fold failed")?;
    let mut w = csv_writer(&dir.join("folds.csv"))?;
    let mut h = vec!["fold".to_string(), "error".into()];
    h.extend(mean.csv_header());
    w.write_record(&h)?;
    let blank = vec![String::new(); mean.csv_header().len()];
    for (i, f) in cv.folds.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        match f {
            Ok(r) => {
                row.push(String::new());
                row.extend(r.csv_row());
            }
            Err(e) => {
                row.push(e.to_string());
                row.extend(blank.clone());
            }
        }
        w.write_record(&row)?;
    }
    let mut row = vec!["mean".to_string(), String::new()];
    row.extend(mean.csv_row());
    w.write_record(&row)?;
    w.flush()?;
    print!("{}", mean.to_key_value());
    let failed = cv.folds.iter().filter(|f| f.is_err()).count();
    if failed > 0 {
        bail!("{failed} of {folds} folds failed; see folds.csv");
    }
    Ok(())
}

pub fn stream(checkpoint: &Path) -> Result<()> {
    let (net, table) = load_checkpoint(checkpoint)?;
    let meta = ModelMeta::from_table(&table)?;
    let scales = meta.scales.clone();
    let out_scale = scales[meta.scenario.mask_channel()?];
    let mut state = StreamState::new(&net);
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let header: Vec<String> = meta
        .scenario
        .target_loads
        .iter()
        .map(|l| format!("{l}_{}", meta.scenario.output_signal))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    out.flush()?;
    let mut row = String::new();
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let sample = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => {
                log::error!("line {}: {e}; skipped", i + 1);
                continue;
            }
        };
        if sample.len() != scales.len() {
            log::error!(
                "line {}: expected {} values, got {}; skipped",
                i + 1,
                scales.len(),
                sample.len()
            );
            continue;
        }
        let normalized: Vec<f64> = sample.iter().zip(&scales).map(|(v, s)| v / s).collect();
        let estimate = match state.step(&normalized) {
            Ok(y) => y,
            Err(e) => {
                log::error!("line {}: {e}; skipped", i + 1);
                continue;
            }
        };
        row.clear();
        for (j, y) in estimate.iter().enumerate() {
            if j > 0 {
                row.push(',');
            }
            row.push_str(&(y * out_scale).max(0.0).to_string());
        }
        writeln!(out, "{row}")?;
        out.flush()?;
    }
    Ok(())
}

pub fn synth(
    config: Option<&Path>,
    seed: Option<u64>,
    days: usize,
    out: Option<&Path>,
) -> Result<()> {
    let mut household = match config {
        Some(path) => HouseholdConfig::from_path(path)?,
        None => HouseholdConfig::deferrable_house(days, 0),
    };
    if let Some(seed) = seed {
        household.seed = seed;
    }
    let series = synthesize_household(&household)?;
    match out {
        Some(path) => {
            let file =
                fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            series.write_csv(io::BufWriter::new(file))?;
        }
        None => series.write_csv(io::BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

pub fn inspect(checkpoint: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let (net_config, meta) = match (checkpoint, config) {
        (Some(path), _) => {
            let (net, meta) = load_checkpoint(path)?;
            (net.config().clone(), Some(meta))
        }
        (None, Some(path)) => (load_config(path, None)?.network_config()?, None),
        (None, None) => bail!("give --checkpoint or --config"),
    };
    net_config.validate()?;
    println!("parameters = {}", net_config.parameter_count());
    println!("receptive_field = {}", net_config.receptive_field());
    println!();
    println!("[network]");
    print!("{}", toml::to_string(&net_config)?);
    if let Some(meta) = meta {
        println!();
        println!("[meta]");
        print!("{}", toml::to_string(&meta)?);
    }
    Ok(())
}
