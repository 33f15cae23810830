//! Browser demo: loss curves, completion of a simulated rating matrix, and
//! the prediction shift caused by a nuke attack. Every export returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rdmc::attacks::{forge_profiles, select_target_simulation, AttackScheme, AttackSpec};
use rdmc::evaluation::{mae, mps};
use rdmc::experiment::{fit_methods, LambdaChoice, MethodSpec};
use rdmc::rng::derive_seed;
use rdmc::selection::SelectionConfig;
use rdmc::simulation::{simulate_recommender, Missingness, RecommenderSimConfig, SimTruth};
use rdmc::{Loss, LossKind};

const ROWS: usize = 120;
const COLS: usize = 80;
const RANK: usize = 5;

/// Two quick holdout fits keep selection interactive.
const SELECTION: SelectionConfig = SelectionConfig {
    replications: 2,
    holdout_fraction: 0.1,
};

#[derive(Serialize)]
struct Curve {
    loss: &'static str,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct Curves {
    x: Vec<f64>,
    curves: Vec<Curve>,
}

#[derive(Serialize)]
struct Score {
    method: String,
    value: f64,
    lambda: Option<f64>,
}

#[derive(Serialize)]
struct Completion {
    rows: usize,
    cols: usize,
    observed: usize,
    scores: Vec<Score>,
}

#[derive(Serialize)]
struct Shift {
    scheme: String,
    epsilon: f64,
    target: usize,
    fake_rows: usize,
    shifts: Vec<Score>,
}

fn methods(names: &[&str]) -> Vec<MethodSpec> {
    names.iter().map(|n| n.parse().expect("known method")).collect()
}

fn simulate(levels: u8, missingness: &str, seed: u64) -> Result<SimTruth, String> {
    let config = RecommenderSimConfig {
        rows: ROWS,
        cols: COLS,
        rank: RANK,
        levels,
        missingness: missingness.parse::<Missingness>().map_err(|e| e.to_string())?,
        seed,
        ..RecommenderSimConfig::default()
    };
    simulate_recommender(&config).map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Loss values on `[-(K-1), K-1]` for every loss with its default parameter.
pub fn loss_curves_json(levels: u8) -> Result<String, String> {
    if levels < 2 {
        return Err("at least two categories are needed".into());
    }
    let range = f64::from(levels - 1);
    let x: Vec<f64> = (0..=200).map(|k| -range + 2.0 * range * f64::from(k) / 200.0).collect();
    let curves = [LossKind::PseudoHuber, LossKind::Absolute, LossKind::Truncated, LossKind::Squared]
        .into_iter()
        .map(|kind| {
            let loss = Loss::with_defaults(kind, levels);
            Curve {
                loss: kind.name(),
                y: x.iter().map(|&v| loss.evaluate(v)).collect(),
            }
        })
        .collect();
    to_json(&Curves { x, curves })
}

/// MAE on the missing cells of a simulated matrix for RDMC, Soft-Impute
/// and median imputation.
pub fn complete_json(levels: u8, missingness: &str, seed: u64) -> Result<String, String> {
    let truth = simulate(levels, missingness, seed)?;
    let cells = truth.evaluation_cells();
    let choice = LambdaChoice::Select {
        config: &SELECTION,
        seed: derive_seed(seed, 10),
    };
    let fits = fit_methods(
        &methods(&["rdmc-phuber-liberal", "si-liberal", "si-discretized-liberal", "median"]),
        &truth.observed,
        choice,
        derive_seed(seed, 11),
    )
    .map_err(|e| e.to_string())?;
    let mut scores = Vec::new();
    for fit in &fits {
        let value = mae(|i, j| f64::from(truth.full.get(i, j)), &fit.predictions, &cells).map_err(|e| e.to_string())?;
        scores.push(Score {
            method: fit.method.to_string(),
            value,
            lambda: fit.path.as_ref().map(|p| p.lambda),
        });
    }
    to_json(&Completion {
        rows: truth.observed.rows(),
        cols: truth.observed.cols(),
        observed: truth.observed.nnz(),
        scores,
    })
}

/// Mean prediction shift of the target item for RDMC and Soft-Impute.
/// `lambda` is selected before the attack and reused after it.
pub fn attack_json(levels: u8, scheme: &str, epsilon: f64, seed: u64) -> Result<String, String> {
    let scheme: AttackScheme = scheme.parse().map_err(|e: rdmc::Error| e.to_string())?;
    let truth = simulate(levels, "mnar", seed)?;
    let train = &truth.observed;
    let target = select_target_simulation(train, &truth.shifts, truth.shift_max).map_err(|e| e.to_string())?;
    let specs = methods(&["rdmc-phuber-liberal", "si-liberal"]);
    let choice = LambdaChoice::Select {
        config: &SELECTION,
        seed: derive_seed(seed, 10),
    };
    let before = fit_methods(&specs, train, choice, 0).map_err(|e| e.to_string())?;
    let spec = AttackSpec::new(scheme, epsilon, derive_seed(seed, 12));
    let attacked = forge_profiles(train, target, &spec).map_err(|e| e.to_string())?;
    let after = fit_methods(&specs, &attacked.matrix, LambdaChoice::Reuse(&before), 0).map_err(|e| e.to_string())?;
    let rows: Vec<usize> = (0..train.rows()).filter(|&i| train.get(i, target).is_none()).collect();
    let mut shifts = Vec::new();
    for (b, a) in before.iter().zip(&after) {
        shifts.push(Score {
            method: b.method.to_string(),
            value: mps(&b.predictions, &a.predictions, target, &rows).map_err(|e| e.to_string())?,
            lambda: b.path.as_ref().map(|p| p.lambda),
        });
    }
    to_json(&Shift {
        scheme: scheme.name().into(),
        epsilon,
        target,
        fake_rows: attacked.fake_rows,
        shifts,
    })
}

#[wasm_bindgen]
pub fn loss_curves(levels: u8) -> Result<String, JsError> {
    loss_curves_json(levels).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn complete(levels: u8, missingness: &str, seed: u32) -> Result<String, JsError> {
    complete_json(levels, missingness, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn attack(levels: u8, scheme: &str, epsilon: f64, seed: u32) -> Result<String, JsError> {
    attack_json(levels, scheme, epsilon, u64::from(seed)).map_err(|e| JsError::new(&e))
}
