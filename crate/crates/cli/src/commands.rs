use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use rdmc::attacks::{forge_profiles, select_target_empirical, AttackScheme, AttackSpec};
use rdmc::dataset::{write_long_csv, DatasetDescriptor, DatasetFormat, LoadedRatings};
use rdmc::evaluation::{mae, read_records, summarize, write_records, write_summary, Metric, ResultRecord};
use rdmc::experiment::{fit_methods, run_experiment, ExperimentConfig, LambdaChoice, MethodFit, MethodSpec};
use rdmc::rng::derive_seed;
use rdmc::selection::SelectionConfig;
use rdmc::simulation::{simulate_recommender, simulate_survey, RecommenderSimConfig, SimTruth, SurveySimConfig};
use rdmc::split_train_test;

use crate::output::{read_cells, OutDir, Prediction};
use crate::{AttackArgs, Cli, Command, DataArgs, EvaluateArgs, ExperimentArgs, FitArgs, Format, SimKind, SimulateArgs, SummarizeArgs};

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Attack(a) => attack(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Summarize(a) => summarize_records(cli, a),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let (kind, truth): (&str, SimTruth) = match a.kind {
        SimKind::Recommender => {
            let cfg = RecommenderSimConfig {
                rows: a.rows,
                cols: a.cols,
                rank: a.rank,
                levels: a.levels.unwrap_or(5),
                missingness: a.missingness.parse()?,
                mcar_fraction: a.mcar_fraction,
                seed,
            };
            ("recommender", simulate_recommender(&cfg)?)
        }
        SimKind::Survey => {
            let cfg = SurveySimConfig {
                rows: a.rows,
                constructs: a.constructs,
                items_per_construct: a.items_per_construct,
                levels: a.levels.unwrap_or(7),
                abandonment: a.abandonment,
                careless: a.careless,
                seed,
            };
            ("survey", simulate_survey(&cfg)?)
        }
    };
    let out = OutDir::create(&cli.out)?;
    write_long_csv(out.file("observed.csv")?, &LoadedRatings::with_numbered_ids(truth.observed.clone()))?;
    write_long_csv(out.file("truth.csv")?, &LoadedRatings::with_numbered_ids(truth.full.to_sparse()))?;
    out.json(
        "meta.json",
        &json!({
            "kind": kind,
            "seed": seed,
            "rows": truth.full.rows(),
            "cols": truth.full.cols(),
            "levels": truth.full.levels(),
            "observed": truth.observed.nnz(),
            "shift_max": truth.shift_max,
            "shifts": truth.shifts,
            "careless_users": truth.careless_rows.iter().map(|i| i + 1).collect::<Vec<_>>(),
            "item_order": truth.item_order.as_ref().map(|o| o.iter().map(|j| j + 1).collect::<Vec<_>>()),
            "reverse_keyed": truth.reverse_keyed,
        }),
    )?;
    info!(
        "{kind} data: {} x {}, {} observed ratings, written to {}",
        truth.full.rows(),
        truth.full.cols(),
        truth.observed.nnz(),
        cli.out.display()
    );
    Ok(())
}

fn load(d: &DataArgs) -> Result<LoadedRatings> {
    let format = match d.format {
        Some(Format::LongCsv) => DatasetFormat::LongCsv,
        Some(Format::MovielensUdata) => DatasetFormat::MovielensUdata,
        None if d.data.extension().is_some_and(|e| e == "csv") => DatasetFormat::LongCsv,
        None => DatasetFormat::MovielensUdata,
    };
    let descriptor = DatasetDescriptor {
        path: d.data.to_string_lossy().into_owned(),
        format,
        min_column_ratings: d.min_ratings,
        min_row_ratings: d.min_user_ratings,
        delimiter: d.delimiter,
        levels: d.levels,
        intersect_users: d.intersect_users.as_ref().map(|p| p.to_string_lossy().into_owned()),
    };
    let data = descriptor.load().with_context(|| format!("reading {}", d.data.display()))?;
    if data.duplicates > 0 {
        warn!("{} repeated user-item pairs; kept the last rating of each", data.duplicates);
    }
    info!(
        "{} users x {} items, {} ratings",
        data.matrix.rows(),
        data.matrix.cols(),
        data.matrix.nnz()
    );
    Ok(data)
}

fn method_spec(a: &FitArgs) -> Result<MethodSpec> {
    let name = match a.method.as_str() {
        "rdmc" => format!("rdmc-{}-{}", a.loss, a.stopping),
        "si" | "si-discretized" => format!("{}-{}", a.method, a.stopping),
        other => other.to_owned(),
    };
    Ok(name.parse()?)
}

fn record(fit: &MethodFit, levels: u8, metric: Metric, value: f64) -> ResultRecord {
    ResultRecord {
        replication: 0,
        method: fit.method.family().into(),
        loss: fit.method.loss_name().into(),
        stopping: fit.method.stopping().map_or("none", |s| s.name()).into(),
        levels,
        missingness: "observed".into(),
        attack: "none".into(),
        epsilon: 0.0,
        metric,
        value,
        lambda: fit.lambda(),
        iterations: fit.iterations(),
        wall_time_ms: fit.wall_time_ms(),
    }
}

#[derive(Serialize)]
struct PathRow {
    lambda: f64,
    iterations: usize,
    converged: bool,
    final_loss: f64,
    wall_time_ms: f64,
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let spec = method_spec(a)?;
    let data = load(&a.data)?;
    let (train, test) = if a.test_fraction > 0.0 {
        let split = split_train_test(&data.matrix, a.test_fraction, derive_seed(seed, 0))?;
        (split.train, split.test)
    } else {
        (data.matrix.clone(), Vec::new())
    };
    let selection = SelectionConfig {
        replications: a.holdout_reps,
        holdout_fraction: a.holdout_fraction,
    };
    let choice = match a.lambda {
        Some(lambda) => LambdaChoice::Fixed(lambda),
        None => LambdaChoice::Select {
            config: &selection,
            seed: derive_seed(seed, 1),
        },
    };
    let started = Instant::now();
    let fits = fit_methods(&[spec], &train, choice, derive_seed(seed, 2))?;
    let fit = &fits[0];
    let elapsed = started.elapsed().as_secs_f64();

    let out = OutDir::create(&cli.out)?;
    let levels = train.scale().max_levels();
    let mut records = Vec::new();
    let test_mae = if test.is_empty() {
        None
    } else {
        let cells: Vec<(usize, usize)> = test.iter().map(|e| (e.row, e.col)).collect();
        let values: std::collections::HashMap<(usize, usize), u8> = test.iter().map(|e| ((e.row, e.col), e.value)).collect();
        let m = mae(|i, j| f64::from(values[&(i, j)]), &fit.predictions, &cells)?;
        records.push(record(fit, levels, Metric::Mae, m));
        Some(m)
    };
    if let Some(path) = &fit.path {
        records.push(record(fit, levels, Metric::Time, path.wall_time_ms));
        out.csv(
            "path.csv",
            path.diagnostics.iter().map(|d| PathRow {
                lambda: d.lambda,
                iterations: d.iterations,
                converged: d.converged,
                final_loss: d.final_loss,
                wall_time_ms: d.wall_time_ms,
            }),
        )?;
        if let Some(report) = &path.validation {
            out.csv("validation.csv", report.records())?;
        }
    }
    write_records(out.file("records.csv")?, &records)?;
    if a.predictions {
        let rows = (0..train.rows()).flat_map(|i| (0..train.cols()).map(move |j| (i, j)));
        out.csv(
            "predictions.csv",
            rows.filter(|&(i, j)| train.get(i, j).is_none()).map(|(i, j)| Prediction {
                user: data.row_ids[i].clone(),
                item: data.col_ids[j].clone(),
                prediction: fit.predictions[(i, j)],
            }),
        )?;
    }
    out.json(
        "meta.json",
        &json!({
            "method": spec.to_string(),
            "seed": seed,
            "lambda": fit.lambda(),
            "iterations": fit.iterations(),
            "test_mae": test_mae,
            "train_ratings": train.nnz(),
            "test_ratings": test.len(),
            "elapsed_s": elapsed,
            "users": data.row_ids,
            "items": data.col_ids,
        }),
    )?;
    match test_mae {
        Some(m) => println!("{spec}: lambda {:.4}, test MAE {m:.4}", fit.lambda()),
        None => println!("{spec}: lambda {:.4}", fit.lambda()),
    }
    Ok(())
}

fn attack(cli: &Cli, a: &AttackArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let scheme: AttackScheme = a.scheme.parse()?;
    let data = load(&a.data)?;
    let target = match &a.target {
        Some(id) => data
            .col_ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| anyhow!("target item `{id}` is not in the data"))?,
        None => select_target_empirical(&data.matrix)?,
    };
    let result = forge_profiles(&data.matrix, target, &AttackSpec::new(scheme, a.epsilon, seed))?;
    let fake_ids: Vec<String> = (1..=result.fake_rows).map(|k| format!("fake-{k}")).collect();
    let attacked = LoadedRatings {
        matrix: result.matrix.clone(),
        row_ids: data.row_ids.iter().cloned().chain(fake_ids.iter().cloned()).collect(),
        col_ids: data.col_ids.clone(),
        duplicates: 0,
    };
    let out = OutDir::create(&cli.out)?;
    write_long_csv(out.file("attacked.csv")?, &attacked)?;
    let ids = |cols: &[usize]| -> Vec<String> { cols.iter().map(|&j| data.col_ids[j].clone()).collect() };
    out.json(
        "attack.json",
        &json!({
            "scheme": scheme.name(),
            "epsilon": a.epsilon,
            "seed": seed,
            "target": data.col_ids[target],
            "fake_users": fake_ids,
            "selected": ids(&result.selected),
            "fillers": result.fillers.iter().map(|f| ids(f)).collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "{scheme}: {} fake profiles against item {}",
        result.fake_rows, data.col_ids[target]
    );
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let (metric, value, cells) = match (&a.truth, &a.predictions, &a.before, &a.after, &a.target) {
        (Some(truth), Some(pred), None, None, None) => {
            let truth = read_cells(truth)?;
            let pred = read_cells(pred)?;
            let common: Vec<f64> = pred
                .iter()
                .filter_map(|(k, p)| truth.get(k).map(|t| (t - p).abs()))
                .collect();
            if common.is_empty() {
                bail!("no cell appears in both files");
            }
            ("mae", common.iter().sum::<f64>() / common.len() as f64, common.len())
        }
        (None, None, Some(before), Some(after), Some(target)) => {
            let before = read_cells(before)?;
            let after = read_cells(after)?;
            let shifts: Vec<f64> = before
                .iter()
                .filter(|((_, item), _)| item == target)
                .filter_map(|(k, b)| after.get(k).map(|x| x - b))
                .collect();
            if shifts.is_empty() {
                bail!("no prediction for item `{target}` appears in both files");
            }
            ("mps", shifts.iter().sum::<f64>() / shifts.len() as f64, shifts.len())
        }
        _ => bail!("pass either --truth with --predictions, or --before, --after and --target"),
    };
    let result = json!({ "metric": metric, "value": value, "cells": cells });
    OutDir::create(&cli.out)?.json("evaluation.json", &result)?;
    println!("{metric} {value:.6} over {cells} cells");
    Ok(())
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("experiment needs --config <file>"))?;
    let mut config = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = a.replications {
        config.replications = r;
    }
    config.validate()?;
    info!(
        "experiment `{}`: {} replications of {}",
        config.name,
        config.replications,
        config.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
    );
    let started = Instant::now();
    let output = run_experiment(&config)?;
    for (rep, msg) in &output.failures {
        warn!("replication {rep} failed: {msg}");
    }
    let out = OutDir::create(&cli.out)?;
    write_records(out.file("records.csv")?, &output.records)?;
    let summary = summarize(&output.records);
    write_summary(out.file("summary.csv")?, &summary)?;
    std::fs::write(out.path("config.toml"), config.to_toml()?)?;
    #[derive(Serialize)]
    struct Failure<'a> {
        replication: usize,
        error: &'a str,
    }
    out.csv(
        "failures.csv",
        output.failures.iter().map(|(r, e)| Failure {
            replication: *r,
            error: e,
        }),
    )?;
    let methods: BTreeSet<String> = output.records.iter().map(|r| r.method.clone()).collect();
    out.json(
        "meta.json",
        &json!({
            "name": config.name,
            "replications": config.replications,
            "failed": output.failures.len(),
            "records": output.records.len(),
            "methods": methods,
            "elapsed_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    print_summary(&summary);
    Ok(())
}

/// Stops quietly when stdout is closed, e.g. when piped into `head`.
fn print_summary(rows: &[rdmc::evaluation::SummaryRow]) {
    let mut stdout = std::io::stdout().lock();
    for r in rows {
        let line = writeln!(
            stdout,
            "{:<18} {:<9} {:<7} K={:<2} {:<8} {:<17} eps={:<4} {:<4} n={:<3} median {:.4} [{:.4}, {:.4}]",
            r.method,
            r.loss,
            r.stopping,
            r.levels,
            r.missingness,
            r.attack,
            r.epsilon,
            format!("{:?}", r.metric).to_lowercase(),
            r.count,
            r.median,
            r.q1,
            r.q3
        );
        if line.is_err() {
            return;
        }
    }
}

fn summarize_records(cli: &Cli, a: &SummarizeArgs) -> Result<()> {
    let file = std::fs::File::open(&a.records).with_context(|| format!("opening {}", a.records.display()))?;
    let records = read_records(file)?;
    let summary = summarize(&records);
    write_summary(OutDir::create(&cli.out)?.file("summary.csv")?, &summary)?;
    print_summary(&summary);
    Ok(())
}
