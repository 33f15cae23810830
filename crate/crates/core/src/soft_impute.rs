//! Soft-Impute (SVD-based) with column-mean centering, and its post-hoc
//! discretized variant.

use faer::Mat;

use crate::error::{Error, Result};
use crate::rating_matrix::{DenseRatings, RatingScale, SparseRatingMatrix};
use crate::solver::{check_ascending, soft_threshold_svd, Diagnostics, Stopping};
use crate::timer::Stopwatch;

pub const STRICT_TOLERANCE: f64 = 1e-4;
pub const LIBERAL_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiConfig {
    pub lambda: f64,
    /// Threshold on `||Z_new - Z_old||_F^2 / ||Z_old||_F^2`.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SiConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tolerance: STRICT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_stopping(mut self, stopping: Stopping) -> Self {
        self.tolerance = match stopping {
            Stopping::Strict => STRICT_TOLERANCE,
            Stopping::Liberal => LIBERAL_TOLERANCE,
        };
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be finite and non-negative".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "soft-impute needs a positive tolerance and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Training-set column means.
pub fn column_means(matrix: &SparseRatingMatrix) -> Result<Vec<f64>> {
    (0..matrix.cols())
        .map(|j| matrix.column_mean(j).ok_or(Error::EmptyColumn { column: j }))
        .collect()
}

/// `P_Ω(R - means)`.
pub fn mean_centered(matrix: &SparseRatingMatrix, means: &[f64]) -> Mat<f64> {
    let mut x = Mat::zeros(matrix.rows(), matrix.cols());
    for e in matrix.entries() {
        x[(e.row, e.col)] = f64::from(e.value) - means[e.col];
    }
    x
}

#[derive(Debug, Clone)]
pub struct SiFit {
    /// Continuous predictions on the original scale (column means added back).
    pub predictions: Mat<f64>,
    /// Centered low-rank estimate, usable as a warm start.
    pub estimate: Mat<f64>,
    pub diagnostics: Diagnostics,
    /// Objective `1/2 ||P_Ω(X - Z)||_F^2 + lambda ||Z||_*` after each iteration.
    pub objective_history: Vec<f64>,
}

/// Soft-Impute on a mean-centered training matrix.
pub fn si_solve(train: &SparseRatingMatrix, config: &SiConfig, warm_start: Option<&Mat<f64>>) -> Result<SiFit> {
    let means = column_means(train)?;
    let x = mean_centered(train, &means);
    si_solve_centered(train, &x, &means, config, warm_start)
}

fn si_solve_centered(
    train: &SparseRatingMatrix,
    x: &Mat<f64>,
    means: &[f64],
    config: &SiConfig,
    warm_start: Option<&Mat<f64>>,
) -> Result<SiFit> {
    config.validate()?;
    let clock = Stopwatch::start();
    let (n, p) = (train.rows(), train.cols());
    let mut current = match warm_start {
        Some(w) if w.nrows() == n && w.ncols() == p => w.clone(),
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start is {}x{}, data is {n}x{p}",
                w.nrows(),
                w.ncols()
            )))
        }
        None => Mat::zeros(n, p),
    };
    let mask = train.observed_mask();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let filled = Mat::from_fn(n, p, |i, j| {
            if mask[j * n + i] {
                x[(i, j)]
            } else {
                current[(i, j)]
            }
        });
        let update = soft_threshold_svd(filled, config.lambda)?;
        let next = update.aux;

        let mut change = 0.0;
        let mut scale = 0.0;
        let mut fit = 0.0;
        for j in 0..p {
            for i in 0..n {
                let d = next[(i, j)] - current[(i, j)];
                change += d * d;
                scale += current[(i, j)] * current[(i, j)];
                if mask[j * n + i] {
                    let r = x[(i, j)] - next[(i, j)];
                    fit += r * r;
                }
            }
        }
        let objective = 0.5 * fit + config.lambda * update.singular_values.iter().sum::<f64>();
        history.push(objective);
        let relative = if scale > 0.0 {
            change / scale
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        converged = relative < config.tolerance;
        current = next;
    }

    let predictions = Mat::from_fn(n, p, |i, j| current[(i, j)] + means[j]);
    Ok(SiFit {
        predictions,
        diagnostics: Diagnostics {
            lambda: config.lambda,
            iterations,
            converged,
            final_loss: history.last().copied().unwrap_or(f64::NAN),
            wall_time_ms: clock.elapsed_ms(),
        },
        estimate: current,
        objective_history: history,
    })
}

/// Fits an ascending `lambda` grid by walking it from the largest value down,
/// warm-starting each fit from the previous estimate. `visit` receives the
/// grid index of each fit, in descending-lambda order.
pub fn si_path_with<F>(train: &SparseRatingMatrix, grid: &[f64], config: &SiConfig, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &SiFit) -> Result<()>,
{
    check_ascending(grid)?;
    let means = column_means(train)?;
    let x = mean_centered(train, &means);
    let mut warm: Option<Mat<f64>> = None;
    for k in (0..grid.len()).rev() {
        let cfg = SiConfig {
            lambda: grid[k],
            ..*config
        };
        let fit = si_solve_centered(train, &x, &means, &cfg, warm.as_ref())?;
        visit(k, &fit)?;
        warm = Some(fit.estimate);
    }
    Ok(())
}

/// Rounds to the nearest category (halves away from zero) and clamps into
/// each column's scale.
pub fn discretize_predictions(predictions: &Mat<f64>, scale: &RatingScale) -> DenseRatings {
    DenseRatings::from_fn(predictions.nrows(), predictions.ncols(), scale.max_levels(), |i, j| {
        discretize_value(predictions[(i, j)], scale.levels(j))
    })
}

pub fn discretize_value(y: f64, levels: u8) -> u8 {
    if y.is_nan() {
        return 1;
    }
    y.round().clamp(1.0, f64::from(levels)) as u8
}
