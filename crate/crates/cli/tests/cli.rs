use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use wavenilm::data::{ingest_csv, Signal};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wavenilm"));
    c.env("WAVENILM_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const HOUSEHOLD: &str = r#"
seed = 4
days = 6
[noise]
jitter_std = 20.0
[[appliance]]
name = "heater"
initial_state = 0
transitions = [[0.95, 0.05], [0.1, 0.9]]
state = [{ name = "off", power = 0.0, phase = 0.0, power_std = 0.0 },
         { name = "on", power = 1200.0, phase = 0.0, power_std = 0.0 }]
[[appliance]]
name = "motor"
initial_state = 0
transitions = [[0.9, 0.1], [0.1, 0.9]]
state = [{ name = "off", power = 0.0, phase = 0.0, power_std = 0.0 },
         { name = "on", power = 400.0, phase = 0.6, power_std = 0.0 }]
[[appliance]]
name = "other"
initial_state = 0
transitions = [[0.8, 0.2], [0.3, 0.7]]
state = [{ name = "off", power = 0.0, phase = 0.0, power_std = 0.0 },
         { name = "on", power = 500.0, phase = 0.3, power_std = 100.0 }]
"#;

fn experiment(dir: &Path, mode: &str, inputs: &str, extra: &str) -> PathBuf {
    let mut text = String::from("seed = 2\n[data.synthetic]\n");
    for line in HOUSEHOLD.lines() {
        let line = line
            .replace("[[appliance]]", "[[data.synthetic.appliance]]")
            .replace("[noise]", "[data.synthetic.noise]");
        text.push_str(&line);
        text.push('\n');
    }
    text.push_str(&format!(
        r#"
[scenario]
mode = "{mode}"
target_loads = ["heater", "motor"]
input_signals = {inputs}
output_signal = "P"
[network]
block_widths = [12, 12, 12]
dilations = [1, 2, 4]
input_dense_width = 12
[training]
window_length = 240
batch_size = 4
learning_rate = 0.01
patience = 0
{extra}
"#
    ));
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn synth_is_byte_identical_and_reingests_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("house.toml");
    std::fs::write(&cfg, HOUSEHOLD).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&run(&[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
        ]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ingested = ingest_csv(&a, None).unwrap();
    assert!(ingested.warnings.is_empty());
    let s = ingested.series;
    assert_eq!(s.len(), 6 * 1440);
    assert_eq!(s.appliance_names(), vec!["heater", "motor", "other"]);
    let noise = s.noise.as_ref().expect("noise columns");
    for sig in Signal::ALL {
        let agg = s.aggregate.get(sig).unwrap();
        for t in 0..s.len() {
            let sum = s
                .appliances
                .iter()
                .map(|(_, c)| c.get(sig).unwrap()[t])
                .sum::<f64>()
                + noise.get(sig).unwrap()[t];
            assert!(
                (agg[t] - sum).abs() <= 1e-9 * agg[t].abs().max(1.0),
                "{sig} at {t}"
            );
        }
    }
}

#[test]
fn synth_seed_override_changes_output() {
    let out_a = run(&["synth", "--days", "1", "--seed", "1"]);
    let out_b = run(&["synth", "--days", "1", "--seed", "2"]);
    ok(&out_a);
    ok(&out_b);
    assert_ne!(out_a.stdout, out_b.stdout);
    let header = String::from_utf8_lossy(&out_a.stdout)
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("timestamp,agg_I,agg_P,agg_Q,agg_S,FRE_I"));
}

#[test]
fn train_writes_run_directory_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), "denoised", r#"["P", "Q"]"#, "max_epochs = 3");
    let runs: Vec<PathBuf> = ["one", "two"].iter().map(|n| dir.path().join(n)).collect();
    for r in &runs {
        ok(&run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            r.to_str().unwrap(),
        ]));
    }
    for f in [
        "history.csv",
        "best.ckpt",
        "final.ckpt",
        "config.toml",
        "report.txt",
        "report.csv",
    ] {
        assert!(runs[0].join(f).exists(), "{f} missing");
    }
    let history = std::fs::read_to_string(runs[0].join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert!(history.starts_with("epoch,train_loss,validation_loss,validation_accuracy"));
    assert_eq!(
        history,
        std::fs::read_to_string(runs[1].join("history.csv")).unwrap()
    );

    let other = dir.path().join("three");
    ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        other.to_str().unwrap(),
    ]));
    assert_ne!(
        history,
        std::fs::read_to_string(other.join("history.csv")).unwrap()
    );
}

#[test]
fn invalid_signal_is_a_user_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), "noisy", r#"["P", "W"]"#, "");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("input_signals"), "{err}");
}

#[test]
fn missing_checkpoint_and_bad_flags_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), "noisy", r#"["P"]"#, "");
    let missing = dir.path().join("nope.ckpt");
    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["stream", "--checkpoint", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn inspect_reports_full_size_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.toml");
    std::fs::write(
        &path,
        r#"
[data]
path = "data.csv"
[scenario]
mode = "noisy"
target_loads = ["FRE", "HPE", "WOE", "CDE", "DWE"]
input_signals = ["I", "P", "Q", "S"]
output_signal = "P"
"#,
    )
    .unwrap();
    let out = run(&["inspect", "--config", path.to_str().unwrap()]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    // 4 inputs and 20 loads give 3,280,404; here 5 loads.
    assert!(
        text.contains(&format!("parameters = {}", 3_280_404 - 15 * 3073)),
        "{text}"
    );
    assert!(text.contains("receptive_field = 512"));
}

/// Trains a small model once and checks evaluation, prediction CSV and
/// streaming against each other.
#[test]
fn eval_and_stream_agree_with_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), "noisy", r#"["P", "Q"]"#, "max_epochs = 25");
    // a short training span leaves a visible generalization gap
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("seed = 2\n", "seed = 2\ntrain_fraction = 0.15\n");
    std::fs::write(&cfg, text).unwrap();
    let cfg = cfg.to_str().unwrap();
    let run_dir = dir.path().join("run");
    ok(&run(&[
        "train",
        "--config",
        cfg,
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let ckpt = run_dir.join("best.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let inspect = run(&["inspect", "--checkpoint", ckpt]);
    ok(&inspect);
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("receptive_field = 8"));

    let ea = |split: &str| -> f64 {
        let out_dir = dir.path().join(split);
        let out = run(&[
            "eval",
            "--config",
            cfg,
            "--checkpoint",
            ckpt,
            "--split",
            split,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        ok(&out);
        let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
        report
            .lines()
            .find_map(|l| l.strip_prefix("estimated_accuracy_total = "))
            .unwrap()
            .parse()
            .unwrap()
    };
    let train = ea("train");
    let test = ea("test");
    let all = ea("all");
    assert!(train >= test, "train {train} < test {test}");
    assert!(all > 0.5);

    // predictions re-ingest and match the report's inputs
    let pred_path = dir.path().join("all").join("predictions.csv");
    let pred = ingest_csv(&pred_path, None).unwrap();
    assert!(pred.warnings.is_empty());
    let series = pred.series;
    assert_eq!(series.len(), 6 * 1440);
    assert_eq!(series.appliance_names(), vec!["heater", "motor"]);
    let report_csv = std::fs::read_to_string(dir.path().join("all").join("report.csv")).unwrap();
    assert!(report_csv.starts_with(
        "estimated_accuracy_total,absolute_error_sum,ground_truth_sum,ea_heater,ea_motor"
    ));

    // streaming the model inputs reproduces the batch predictions
    let p = series.aggregate.get(Signal::P).unwrap();
    let q = series.aggregate.get(Signal::Q).unwrap();
    let n = 2000;
    let mut input = String::from("P,Q\n");
    for t in 0..n {
        input.push_str(&format!("{},{}\n", p[t], q[t]));
    }
    let mut child = bin()
        .args(["stream", "--checkpoint", ckpt])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("heater_P,motor_P"));
    let heater = series.appliance("heater").unwrap().get(Signal::P).unwrap();
    let motor = series.appliance("motor").unwrap().get(Signal::P).unwrap();
    let mut count = 0;
    for (t, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(
            (v[0] - heater[t]).abs() < 1e-9 * heater[t].abs().max(1.0),
            "t={t}"
        );
        assert!(
            (v[1] - motor[t]).abs() < 1e-9 * motor[t].abs().max(1.0),
            "t={t}"
        );
        count += 1;
    }
    assert_eq!(count, n);
}

#[test]
fn stream_skips_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), "noisy", r#"["P"]"#, "max_epochs = 1");
    let run_dir = dir.path().join("run");
    ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let mut child = bin()
        .args([
            "stream",
            "--checkpoint",
            run_dir.join("final.ckpt").to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"100\nabc\n1,2\nNaN\n\n200\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    assert!(!out.stderr.is_empty());
}
