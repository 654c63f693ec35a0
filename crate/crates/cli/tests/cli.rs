use std::path::Path;
use std::process::{Command, Output};

use copula_dbn::copula::CopulaPair;
use copula_dbn::eval::forecast_horizon;
use copula_dbn::ingest::{clean, parse_csv, parse_timestamp, ColumnMap};
use copula_dbn::persist::{load_copulas, TrainedModel};
use tempfile::TempDir;

const QUICK: &str = "days = 120\nseason = \"spring\"\nhorizon = \"day_ahead\"\n\
                     pretrain_epochs = 3\nmax_finetune_epochs = 40\nhidden = [10, 10]\n";

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_copula-dbn"))
        .arg("--config")
        .arg("run.toml")
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> String {
    let out = run(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn gen_writes_one_row_per_hour() {
    let dir = workspace("days = 30\n");
    ok(dir.path(), &["gen"]);
    let text = std::fs::read_to_string(dir.path().join("out/data.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 30 * 24);
}

#[test]
fn flags_override_the_config_file() {
    let dir = workspace("days = 20\nseed = 1\n");
    ok(dir.path(), &["gen", "--seed", "2", "--out", "flagged"]);
    std::fs::write(dir.path().join("run.toml"), "days = 20\nseed = 2\n").unwrap();
    ok(dir.path(), &["gen"]);
    assert_eq!(
        std::fs::read(dir.path().join("flagged/data.csv")).unwrap(),
        std::fs::read(dir.path().join("out/data.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = workspace("days = 20\n");
    let err = fails_with(dir.path(), &["fit-copula", "--data", "nowhere.csv"], 2);
    assert!(err.contains("nowhere.csv"), "{err}");
    fails_with(dir.path(), &["gen", "--season", "monsoon"], 2);
    fails_with(dir.path(), &["normality-report", "--lilliefors-reps", "10"], 2);

    std::fs::write(dir.path().join("run.toml"), "dayz = 20\n").unwrap();
    let err = fails_with(dir.path(), &["gen"], 2);
    assert!(err.contains("dayz"), "{err}");
}

#[test]
fn missing_artifacts_are_named() {
    let dir = workspace(QUICK);
    ok(dir.path(), &["gen"]);
    let err = fails_with(dir.path(), &["train"], 2);
    assert!(err.contains("copula.json") && err.contains("fit-copula"), "{err}");
    let err = fails_with(dir.path(), &["forecast"], 2);
    assert!(err.contains("model.json"), "{err}");
    let err = fails_with(dir.path(), &["evaluate"], 2);
    assert!(err.contains("trace.csv"), "{err}");
}

#[test]
fn fitted_copula_table_matches_the_generator() {
    let dir = workspace("alpha_temp = 3.5\nseed = 5\n");
    ok(dir.path(), &["gen"]);
    let stdout = ok(dir.path(), &["fit-copula"]);
    assert!(stdout.contains("wrote out/table2.csv"));
    let table = std::fs::read_to_string(dir.path().join("out/table2.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0], rows[1][0]), ("temperature", "price"));
    let alpha: f64 = rows[0][1].parse().unwrap();
    let tail: f64 = rows[0][2].parse().unwrap();
    assert!((3.15..=3.85).contains(&alpha), "alpha {alpha}");
    assert!((tail - (2.0 - 2f64.powf(1.0 / alpha))).abs() < 1e-12);
    let pair = load_copulas(dir.path().join("out/copula.json")).unwrap();
    assert_eq!(pair.temperature.alpha, alpha);
}

#[test]
fn pipeline_produces_every_artifact() {
    let dir = workspace(QUICK);
    for args in [
        &["gen"][..],
        &["fit-copula"],
        &["train"],
        &["forecast"],
        &["evaluate"],
        &["structure-search", "--max-width", "4", "--max-depth", "2"],
        &["normality-report", "--lilliefors-reps", "1000"],
    ] {
        ok(dir.path(), args);
    }
    for name in [
        "data.csv",
        "copula.json",
        "table2.csv",
        "model.json",
        "trace.csv",
        "results.csv",
        "structure.json",
        "structure.csv",
        "normality.csv",
    ] {
        assert!(dir.path().join("out").join(name).is_file(), "{name}");
    }
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("spring,copula-dbn,day_ahead,full,"));
    let normality = std::fs::read_to_string(dir.path().join("out/normality.csv")).unwrap();
    assert_eq!(normality.lines().count(), 7);
    let structure: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/structure.json")).unwrap()).unwrap();
    assert_eq!(structure["architecture"][0], 14);
}

#[test]
fn disabling_indicators_trains_a_plain_model() {
    let dir = workspace(QUICK);
    ok(dir.path(), &["gen"]);
    ok(dir.path(), &["train", "--no-indicators"]);
    let model = TrainedModel::load(dir.path().join("out/model.json")).unwrap();
    assert_eq!(model.input_width(), 12);
    assert!(!model.with_indicators());
    ok(dir.path(), &["forecast", "--no-indicators"]);
    let results = ok(dir.path(), &["evaluate"]);
    assert!(results.contains("dbn"), "{results}");
}

#[test]
fn week_ahead_evaluation_adds_a_peak_row() {
    let dir = workspace("days = 200\npretrain_epochs = 2\nmax_finetune_epochs = 20\nhidden = [8]\n");
    ok(dir.path(), &["gen"]);
    ok(dir.path(), &["train", "--algorithm", "elm"]);
    ok(
        dir.path(),
        &["forecast", "--season", "spring", "--horizon", "week_ahead"],
    );
    ok(
        dir.path(),
        &["evaluate", "--season", "spring", "--horizon", "week_ahead"],
    );
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let windows: Vec<&str> = results.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(windows, ["full", "peak"]);
    assert!(results.contains(",elm,week_ahead,peak,"));
}

#[test]
fn corrupted_model_names_the_field() {
    let dir = workspace(QUICK);
    ok(dir.path(), &["gen"]);
    ok(dir.path(), &["train", "--algorithm", "dbn"]);
    let path = dir.path().join("out/model.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["head"]["weights"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!(0.5));
    std::fs::write(&path, doc.to_string()).unwrap();
    let err = fails_with(dir.path(), &["forecast"], 2);
    assert!(err.contains("head.weights"), "{err}");
}

#[test]
fn cli_forecast_matches_in_process_forecast() {
    let dir = workspace(QUICK);
    ok(dir.path(), &["gen"]);
    ok(dir.path(), &["fit-copula"]);
    ok(dir.path(), &["train"]);
    let start = "2016-04-20T00:00:00";
    ok(dir.path(), &["forecast", "--start", start, "--hours", "30"]);

    let out = dir.path().join("out");
    let series = clean(&parse_csv(out.join("data.csv"), &ColumnMap::default()).unwrap().series).unwrap();
    let model = TrainedModel::load(out.join("model.json")).unwrap();
    let pair: CopulaPair = load_copulas(out.join("copula.json")).unwrap();
    let trace = forecast_horizon(&model, &series, Some(&pair), parse_timestamp(start).unwrap(), 30).unwrap();
    let mut expected = Vec::new();
    trace.write_csv_writer(&mut expected).unwrap();
    assert_eq!(std::fs::read(out.join("trace.csv")).unwrap(), expected);
}
