//! ADMM solver for robust discrete matrix completion.
//!
//! The solver minimizes, for a fixed `lambda`, the augmented Lagrangian
//!
//! ```text
//! ||P_Ω(X) - P_Ω(L)||_rho + lambda ||Z||_* + <Θ, L - Z> + mu/2 ||L - Z||_F^2
//! ```
//!
//! over a discrete matrix `L` (each cell restricted to its column's centered
//! categories) and a continuous matrix `Z`. Each iteration soft-thresholds
//! the singular values of `L + Θ/mu` to obtain `Z`, picks the best category
//! of every cell of `L` independently, then updates the multiplier
//! `Θ <- Θ + mu (L - Z)` and grows `mu <- delta mu`.
//!
//! The problem is non-convex; only the per-step optimality of each update is
//! guaranteed.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::rating_matrix::CenteredMatrix;
use crate::timer::Stopwatch;

pub const DEFAULT_MU: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 1.05;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const STRICT_MAX_ITER: usize = 100;
pub const LIBERAL_MAX_ITER: usize = 10;

/// Absolute tolerance below which two candidate objectives count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Iteration budget: run to convergence, or stop after a few iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stopping {
    Strict,
    Liberal,
}

impl Stopping {
    pub fn name(self) -> &'static str {
        match self {
            Stopping::Strict => "strict",
            Stopping::Liberal => "liberal",
        }
    }
}

impl fmt::Display for Stopping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stopping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Stopping::Strict),
            "liberal" => Ok(Stopping::Liberal),
            other => Err(Error::InvalidParameter(format!("unknown stopping rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu0: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub loss: Loss,
}

impl SolverConfig {
    pub fn new(lambda: f64, loss: Loss) -> Self {
        Self {
            lambda,
            mu0: DEFAULT_MU,
            delta: DEFAULT_DELTA,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: STRICT_MAX_ITER,
            loss,
        }
    }

    pub fn with_stopping(mut self, stopping: Stopping) -> Self {
        self.max_iter = match stopping {
            Stopping::Strict => STRICT_MAX_ITER,
            Stopping::Liberal => LIBERAL_MAX_ITER,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.mu0 > 0.0) {
            return bad("mu0 must be positive");
        }
        if !(self.delta > 1.0) {
            return bad("delta must exceed 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("convergence tolerance must be positive");
        }
        if self.max_iter == 0 {
            return bad("at least one iteration is required");
        }
        Ok(())
    }
}

/// The ADMM iterate.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Discrete completion `L` on the centered scale.
    pub low: Mat<f64>,
    /// Continuous low-rank matrix `Z`.
    pub aux: Mat<f64>,
    /// Multiplier `Θ`.
    pub multiplier: Mat<f64>,
    pub mu: f64,
    mu0: f64,
    delta: f64,
    /// Number of multiplier updates since `mu` was last reset.
    pub updates: i32,
    pub loss_history: Vec<f64>,
}

impl SolverState {
    /// Cold start: `L = P_Ω(X)` (median imputation), `Θ = 0`.
    pub fn new(centered: &CenteredMatrix, mu0: f64, delta: f64) -> Self {
        let (n, p) = (centered.rows(), centered.cols());
        Self::from_parts(centered.projected(), Mat::zeros(n, p), mu0, delta)
    }

    /// Starts from a given `L` and `Θ`, with `mu` reset to `mu0`.
    pub fn from_parts(low: Mat<f64>, multiplier: Mat<f64>, mu0: f64, delta: f64) -> Self {
        let (n, p) = (low.nrows(), low.ncols());
        Self {
            low,
            aux: Mat::zeros(n, p),
            multiplier,
            mu: mu0,
            mu0,
            delta,
            updates: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.low.nrows()
    }

    pub fn cols(&self) -> usize {
        self.low.ncols()
    }

    /// Soft-thresholded SVD of `L + Θ/mu` at level `lambda/mu`.
    pub fn update_aux(&self, lambda: f64) -> Result<AuxUpdate> {
        let inv_mu = 1.0 / self.mu;
        let mut target = Mat::zeros(self.rows(), self.cols());
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                let v = self.low[(i, j)] + inv_mu * self.multiplier[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i,
                        column: j,
                        value: v,
                    });
                }
                target[(i, j)] = v;
            }
        }
        soft_threshold_svd(target, lambda * inv_mu)
    }

    /// Element-wise categorical minimization for `L` given `Z`, `Θ` and `mu`.
    pub fn update_low(&self, centered: &CenteredMatrix, loss: &Loss) -> Mat<f64> {
        let (n, p) = (self.rows(), self.cols());
        let inv_mu = 1.0 / self.mu;
        let half_mu = 0.5 * self.mu;
        let mut low = Mat::zeros(n, p);
        let mut categories = Vec::new();
        let mut table = Vec::new();
        for j in 0..p {
            categories.clear();
            categories.extend(centered.categories(j));
            let k = categories.len();
            let median = centered.medians()[j];
            // c_k - X_ij = k - R_ij is an integer in -(K-1)..=K-1.
            table.clear();
            table.extend((0..2 * k - 1).map(|d| loss.evaluate(d as f64 - (k - 1) as f64)));
            let mut observed = centered.source().column(j).iter().peekable();
            for i in 0..n {
                let target = self.aux[(i, j)] - inv_mu * self.multiplier[(i, j)];
                let value = match observed.next_if(|e| e.row == i) {
                    Some(e) => {
                        let offset = k - e.value as usize;
                        argmin_indexed(&categories, |idx, c| {
                            table[idx + offset] + half_mu * (c - target) * (c - target)
                        })
                    }
                    None => {
                        // Nearest category: scan the neighbours of the rounded target.
                        let nearest = (target + median - 0.5).ceil().clamp(1.0, k as f64) as usize - 1;
                        let lo = nearest.saturating_sub(1);
                        let hi = (nearest + 2).min(k);
                        argmin(&categories[lo..hi], |c| (c - target) * (c - target))
                    }
                };
                low[(i, j)] = value;
            }
        }
        low
    }

    /// `Θ <- Θ + mu (L - Z)`, then `mu <- delta mu`.
    pub fn update_multiplier(&mut self) {
        let mu = self.mu;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                self.multiplier[(i, j)] += mu * (self.low[(i, j)] - self.aux[(i, j)]);
            }
        }
        self.updates += 1;
        // Closed form keeps the schedule exact: mu = mu0 * delta^t.
        self.mu = self.mu0 * self.delta.powi(self.updates);
    }

    /// The four terms of the augmented Lagrangian, given `||Z||_*`.
    pub fn objective_terms(
        &self,
        centered: &CenteredMatrix,
        loss: &Loss,
        lambda: f64,
        aux_nuclear_norm: f64,
    ) -> ObjectiveTerms {
        let fit = loss.matrix_loss(centered.observed().map(|(i, j, x)| x - self.low[(i, j)]));
        let mut coupling = 0.0;
        let mut gap = 0.0;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                let d = self.low[(i, j)] - self.aux[(i, j)];
                coupling += self.multiplier[(i, j)] * d;
                gap += d * d;
            }
        }
        ObjectiveTerms {
            fit,
            nuclear: lambda * aux_nuclear_norm,
            coupling,
            penalty: 0.5 * self.mu * gap,
        }
    }

    pub fn objective(&self, centered: &CenteredMatrix, loss: &Loss, lambda: f64) -> Result<f64> {
        let nuclear = nuclear_norm(&self.aux)?;
        Ok(self.objective_terms(centered, loss, lambda, nuclear).total())
    }
}

/// First minimizer of `f` over `candidates` (ascending), treating values
/// within `TIE_TOLERANCE` of the running best as ties.
#[inline]
fn argmin(candidates: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut best = candidates[0];
    let mut best_value = f(best);
    for &c in &candidates[1..] {
        let v = f(c);
        if v < best_value - TIE_TOLERANCE {
            best = c;
            best_value = v;
        }
    }
    best
}

/// As [`argmin`], with `f` also receiving the candidate's index.
#[inline]
fn argmin_indexed(candidates: &[f64], f: impl Fn(usize, f64) -> f64) -> f64 {
    let mut best = candidates[0];
    let mut best_value = f(0, best);
    for (idx, &c) in candidates.iter().enumerate().skip(1) {
        let v = f(idx, c);
        if v < best_value - TIE_TOLERANCE {
            best = c;
            best_value = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub fit: f64,
    pub nuclear: f64,
    pub coupling: f64,
    pub penalty: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fit + self.nuclear + self.coupling + self.penalty
    }
}

/// Result of the `Z`-update.
#[derive(Debug, Clone)]
pub struct AuxUpdate {
    pub aux: Mat<f64>,
    /// Thresholded singular values `(d_i - threshold)_+`, descending; zeros
    /// are dropped.
    pub singular_values: Vec<f64>,
}

impl AuxUpdate {
    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

/// Proximal operator of `threshold * ||.||_*`: shrinks every singular value
/// of `target` by `threshold`, clipping at zero.
pub fn soft_threshold_svd(target: Mat<f64>, threshold: f64) -> Result<AuxUpdate> {
    if threshold == 0.0 {
        let singular_values = target
            .singular_values()
            .map_err(|_| Error::Svd)?
            .into_iter()
            .filter(|&d| d > 0.0)
            .collect();
        return Ok(AuxUpdate {
            aux: target,
            singular_values,
        });
    }
    let (n, p) = (target.nrows(), target.ncols());
    let svd = target.thin_svd().map_err(|_| Error::Svd)?;
    let d = svd.S().column_vector();
    let shrunk: Vec<f64> = (0..d.nrows())
        .map(|k| d[k] - threshold)
        .take_while(|&v| v > 0.0)
        .collect();
    let rank = shrunk.len();
    if rank == 0 {
        return Ok(AuxUpdate {
            aux: Mat::zeros(n, p),
            singular_values: shrunk,
        });
    }
    let mut left = svd.U().subcols(0, rank).to_owned();
    for (k, &s) in shrunk.iter().enumerate() {
        for i in 0..n {
            left[(i, k)] *= s;
        }
    }
    let aux = &left * svd.V().subcols(0, rank).transpose();
    Ok(AuxUpdate {
        aux,
        singular_values: shrunk,
    })
}

pub fn nuclear_norm(m: &Mat<f64>) -> Result<f64> {
    Ok(m.singular_values().map_err(|_| Error::Svd)?.iter().sum())
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat<f64>) -> Result<f64> {
    Ok(m.singular_values()
        .map_err(|_| Error::Svd)?
        .first()
        .copied()
        .unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub wall_time_ms: f64,
}

/// `(L, Θ)` from a previous solve.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub low: Mat<f64>,
    pub multiplier: Mat<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub low: Mat<f64>,
    pub multiplier: Mat<f64>,
    pub diagnostics: Diagnostics,
    pub loss_history: Vec<f64>,
}

impl Solution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            low: self.low.clone(),
            multiplier: self.multiplier.clone(),
        }
    }
}

/// Runs the ADMM iterations for one `lambda` until the relative change of
/// the objective drops to `tolerance` (checked from the second iteration
/// on) or `max_iter` iterations have run.
pub fn solve(
    centered: &CenteredMatrix,
    config: &SolverConfig,
    warm_start: Option<WarmStart>,
) -> Result<Solution> {
    config.validate()?;
    let clock = Stopwatch::start();
    let mut state = match warm_start {
        Some(w) => {
            let (n, p) = (centered.rows(), centered.cols());
            if w.low.nrows() != n || w.low.ncols() != p || w.multiplier.nrows() != n || w.multiplier.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "warm start is {}x{}, data is {n}x{p}",
                    w.low.nrows(),
                    w.low.ncols()
                )));
            }
            SolverState::from_parts(w.low, w.multiplier, config.mu0, config.delta)
        }
        None => SolverState::new(centered, config.mu0, config.delta),
    };

    let mut previous = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let update = state.update_aux(config.lambda)?;
        state.aux = update.aux;
        state.low = state.update_low(centered, &config.loss);
        state.update_multiplier();
        let loss = state
            .objective_terms(centered, &config.loss, config.lambda, update.singular_values.iter().sum())
            .total();
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: iterations,
                lambda: config.lambda,
                mu: state.mu,
            });
        }
        state.loss_history.push(loss);
        if iterations > 1 {
            converged = ((loss - previous) / previous).abs() <= config.tolerance;
        }
        previous = loss;
    }

    Ok(Solution {
        diagnostics: Diagnostics {
            lambda: config.lambda,
            iterations,
            converged,
            final_loss: previous,
            wall_time_ms: clock.elapsed_ms(),
        },
        low: state.low,
        multiplier: state.multiplier,
        loss_history: state.loss_history,
    })
}

/// Solves along an ascending `lambda` grid, warm-starting each fit from the
/// previous `(L, Θ)` with `mu` reset. `visit` sees every solution in order.
pub fn solve_path_with<F>(
    centered: &CenteredMatrix,
    grid: &[f64],
    config: &SolverConfig,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &Solution) -> Result<()>,
{
    check_ascending(grid)?;
    let mut warm = None;
    for (k, &lambda) in grid.iter().enumerate() {
        let cfg = SolverConfig { lambda, ..*config };
        let solution = solve(centered, &cfg, warm.take())?;
        visit(k, &solution)?;
        warm = Some(WarmStart {
            low: solution.low,
            multiplier: solution.multiplier,
        });
    }
    Ok(())
}

/// One point of a regularization path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    pub low: Mat<f64>,
    pub diagnostics: Diagnostics,
}

pub fn solve_path(centered: &CenteredMatrix, grid: &[f64], config: &SolverConfig) -> Result<Vec<PathPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    solve_path_with(centered, grid, config, |_, s| {
        out.push(PathPoint {
            lambda: s.diagnostics.lambda,
            low: s.low.clone(),
            diagnostics: s.diagnostics,
        });
        Ok(())
    })?;
    Ok(out)
}

pub(crate) fn check_ascending(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}
