use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rdmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdmc"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rdmc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate_small(dir: &Path) {
    ok(
        dir,
        &[
            "simulate", "--rows", "50", "--cols", "30", "--rank", "4", "--levels", "5", "--seed", "7", "--out", "sim",
        ],
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(rdmc(dir.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(rdmc(dir.path(), &["fit", "--levels", "x"]).status.code(), Some(2));
    assert_eq!(rdmc(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = rdmc(dir.path(), &["fit", "--data", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    let out = rdmc(dir.path(), &["experiment"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_observed_and_truth() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let observed = fs::read_to_string(dir.path().join("sim/observed.csv")).unwrap();
    let truth = fs::read_to_string(dir.path().join("sim/truth.csv")).unwrap();
    assert!(observed.starts_with("user,item,rating"));
    assert_eq!(truth.lines().count(), 1 + 50 * 30);
    assert!(observed.lines().count() < truth.lines().count());
    let meta = json(&dir.path().join("sim/meta.json"));
    assert_eq!(meta["seed"], 7);

    // Same seed, same data.
    ok(
        dir.path(),
        &[
            "simulate", "--rows", "50", "--cols", "30", "--rank", "4", "--levels", "5", "--seed", "7", "--out", "again",
        ],
    );
    assert_eq!(observed, fs::read_to_string(dir.path().join("again/observed.csv")).unwrap());
}

#[test]
fn simulate_survey() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "survey", "--rows", "40", "--constructs", "2", "--items-per-construct", "4",
            "--careless", "0.1", "--seed", "3", "--out", "survey",
        ],
    );
    let truth = fs::read_to_string(dir.path().join("survey/truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 40 * 8);
}

#[test]
fn fit_evaluate_and_attack_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate_small(d);

    let stdout = ok(
        d,
        &[
            "fit", "--data", "sim/observed.csv", "--method", "si", "--min-ratings", "5", "--holdout-reps", "2",
            "--test-fraction", "0", "--predictions", "--seed", "1", "--out", "before",
        ],
    );
    assert!(stdout.contains("lambda"));
    let predictions = fs::read_to_string(d.join("before/predictions.csv")).unwrap();
    assert!(predictions.starts_with("user,item,prediction"));
    assert!(d.join("before/path.csv").exists());

    let stdout = ok(
        d,
        &["evaluate", "--truth", "sim/truth.csv", "--predictions", "before/predictions.csv", "--out", "ev"],
    );
    assert!(stdout.starts_with("mae"));
    let mae = json(&d.join("ev/evaluation.json"))["value"].as_f64().unwrap();
    assert!(mae > 0.0 && mae < 4.0, "{mae}");

    ok(
        d,
        &[
            "attack", "--data", "sim/observed.csv", "--scheme", "love-hate", "--min-ratings", "5", "--seed", "2",
            "--out", "att",
        ],
    );
    let attack = json(&d.join("att/attack.json"));
    let target = attack["target"].as_str().unwrap().to_owned();
    let fakes = attack["fake_users"].as_array().unwrap();
    assert!(!fakes.is_empty());
    let attacked = fs::read_to_string(d.join("att/attacked.csv")).unwrap();
    assert!(attacked.contains(&format!("fake-1,{target},1")));

    ok(
        d,
        &[
            "fit", "--data", "att/attacked.csv", "--method", "si", "--min-ratings", "5", "--holdout-reps", "2",
            "--test-fraction", "0", "--predictions", "--seed", "1", "--out", "after",
        ],
    );
    let stdout = ok(
        d,
        &[
            "evaluate", "--before", "before/predictions.csv", "--after", "after/predictions.csv", "--target", &target,
            "--out", "shift",
        ],
    );
    assert!(stdout.starts_with("mps"));
}

#[test]
fn fit_at_fixed_lambda_with_rdmc() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    ok(
        dir.path(),
        &[
            "fit", "--data", "sim/observed.csv", "--method", "rdmc-absolute-liberal", "--lambda", "1.0",
            "--min-ratings", "5", "--out", "fit",
        ],
    );
    let records = fs::read_to_string(dir.path().join("fit/records.csv")).unwrap();
    assert!(records.contains("rdmc,absolute,liberal"));
}

#[test]
fn fit_keeps_only_shared_users() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("a.csv"), "user,item,rating\nu1,i1,3\nu2,i1,4\nu3,i1,5\nu1,i2,2\nu3,i2,1\n").unwrap();
    fs::write(d.join("b.csv"), "user,item,rating\nu1,x,3\nu3,y,2\nu9,y,1\n").unwrap();
    ok(
        d,
        &[
            "fit", "--data", "a.csv", "--intersect-users", "b.csv", "--method", "median", "--min-ratings", "1",
            "--test-fraction", "0", "--out", "fit",
        ],
    );
    let meta = json(&d.join("fit/meta.json"));
    assert_eq!(meta["users"], serde_json::json!(["u1", "u3"]));
    assert_eq!(meta["train_ratings"], 4);
}

#[test]
fn experiment_then_summarize() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("exp.toml"),
        r#"
name = "tiny"
data = "recommender"
replications = 2
rows = 40
cols = 30
rank = 3
levels = 5
methods = ["si", "median", "mode"]
attacks = ["average"]
holdout_replications = 2
"#,
    )
    .unwrap();
    ok(d, &["experiment", "--config", "exp.toml", "--threads", "1", "--out", "exp"]);
    for file in ["records.csv", "summary.csv", "config.toml", "failures.csv", "meta.json"] {
        assert!(d.join("exp").join(file).exists(), "{file}");
    }
    let records = fs::read_to_string(d.join("exp/records.csv")).unwrap();
    assert!(records.contains(",mps,"));
    assert!(records.contains(",mae,"));

    let stdout = ok(d, &["summarize", "--records", "exp/records.csv", "--out", "sum"]);
    assert!(stdout.contains("median"));
    assert_eq!(
        fs::read_to_string(d.join("sum/summary.csv")).unwrap(),
        fs::read_to_string(d.join("exp/summary.csv")).unwrap()
    );
}

#[test]
fn experiment_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.toml"), "replicatoins = 3\n").unwrap();
    let out = rdmc(dir.path(), &["experiment", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
}
