//! Regularization grids and repeated-holdout selection of `lambda`.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::parallel::map_collect;
use crate::rating_matrix::{assemble_completion, center, holdout_masks, SparseRatingMatrix};
use crate::soft_impute::{column_means, mean_centered, si_path_with, SiConfig};
use crate::solver::{check_ascending, solve_path_with, spectral_norm, Diagnostics, SolverConfig, Stopping};

pub const GRID_SIZE: usize = 10;
pub const GRID_LOW: f64 = 0.01;
pub const GRID_HIGH: f64 = 1.0;

/// Ten log-spaced values from `0.01 * sigma_max` to `sigma_max`, ascending.
pub fn lambda_grid(sigma_max: f64) -> Result<Vec<f64>> {
    if !(sigma_max > 0.0 && sigma_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cannot scale a lambda grid by largest singular value {sigma_max}"
        )));
    }
    let (lo, hi) = (GRID_LOW.log10(), GRID_HIGH.log10());
    Ok((0..GRID_SIZE)
        .map(|k| {
            let u = lo + (hi - lo) * k as f64 / (GRID_SIZE - 1) as f64;
            10f64.powf(u) * sigma_max
        })
        .collect())
}

/// Grid for RDMC, scaled by `sigma_max(P_Ω(X))` of the median-centered data.
pub fn rdmc_lambda_grid(train: &SparseRatingMatrix) -> Result<Vec<f64>> {
    lambda_grid(spectral_norm(&center(train)?.projected())?)
}

/// Grid for Soft-Impute, scaled by `sigma_max(P_Ω(X))` of the mean-centered data.
pub fn si_lambda_grid(train: &SparseRatingMatrix) -> Result<Vec<f64>> {
    let means = column_means(train)?;
    lambda_grid(spectral_norm(&mean_centered(train, &means))?)
}

/// A fit at one `lambda`, with predictions on the original rating scale for
/// every cell (observed cells carry the observed rating for discrete
/// methods).
#[derive(Debug, Clone)]
pub struct Fit {
    pub predictions: Mat<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Diagnostics of every fit along the path that led to this one.
    pub path: Vec<Diagnostics>,
}

/// A method with a regularization path.
pub trait PathMethod: Sync {
    /// Loss applied to `rating - prediction` on held-out entries.
    fn validation_loss(&self) -> Loss;

    fn grid(&self, train: &SparseRatingMatrix) -> Result<Vec<f64>>;

    /// Fits the whole ascending `grid` on `train`; `visit` receives each grid
    /// index with the corresponding predictions (in the method's own order).
    fn fit_path(
        &self,
        train: &SparseRatingMatrix,
        grid: &[f64],
        visit: &mut dyn FnMut(usize, &Mat<f64>) -> Result<()>,
    ) -> Result<()>;

    /// Fits the path up to (and including) `grid[index]` and returns that fit.
    fn fit_at(&self, train: &SparseRatingMatrix, grid: &[f64], index: usize) -> Result<Fit>;
}

/// RDMC with a given loss and stopping rule. Held-out entries are scored
/// with the fitting loss on the discrete predictions.
#[derive(Debug, Clone, Copy)]
pub struct RdmcMethod {
    pub loss: Loss,
    pub stopping: Stopping,
}

impl RdmcMethod {
    fn config(&self) -> SolverConfig {
        SolverConfig::new(0.0, self.loss).with_stopping(self.stopping)
    }
}

impl PathMethod for RdmcMethod {
    fn validation_loss(&self) -> Loss {
        self.loss
    }

    fn grid(&self, train: &SparseRatingMatrix) -> Result<Vec<f64>> {
        rdmc_lambda_grid(train)
    }

    fn fit_path(
        &self,
        train: &SparseRatingMatrix,
        grid: &[f64],
        visit: &mut dyn FnMut(usize, &Mat<f64>) -> Result<()>,
    ) -> Result<()> {
        let centered = center(train)?;
        solve_path_with(&centered, grid, &self.config(), |k, sol| {
            let completed = assemble_completion(&sol.low, &centered, train)?;
            visit(k, &completed.to_mat())
        })
    }

    fn fit_at(&self, train: &SparseRatingMatrix, grid: &[f64], index: usize) -> Result<Fit> {
        check_ascending(grid)?;
        let centered = center(train)?;
        let mut path = Vec::new();
        let mut last = None;
        solve_path_with(&centered, &grid[..=index], &self.config(), |k, sol| {
            path.push(sol.diagnostics);
            if k == index {
                last = Some(assemble_completion(&sol.low, &centered, train)?);
            }
            Ok(())
        })?;
        let d = *path.last().expect("non-empty path");
        Ok(Fit {
            predictions: last.expect("visited the selected lambda").to_mat(),
            lambda: d.lambda,
            iterations: d.iterations,
            converged: d.converged,
            path,
        })
    }
}

/// Soft-Impute with continuous predictions, scored with squared loss.
#[derive(Debug, Clone, Copy)]
pub struct SoftImputeMethod {
    pub stopping: Stopping,
}

impl PathMethod for SoftImputeMethod {
    fn validation_loss(&self) -> Loss {
        Loss::squared()
    }

    fn grid(&self, train: &SparseRatingMatrix) -> Result<Vec<f64>> {
        si_lambda_grid(train)
    }

    fn fit_path(
        &self,
        train: &SparseRatingMatrix,
        grid: &[f64],
        visit: &mut dyn FnMut(usize, &Mat<f64>) -> Result<()>,
    ) -> Result<()> {
        let cfg = SiConfig::new(0.0).with_stopping(self.stopping);
        si_path_with(train, grid, &cfg, |k, fit| visit(k, &fit.predictions))
    }

    fn fit_at(&self, train: &SparseRatingMatrix, grid: &[f64], index: usize) -> Result<Fit> {
        check_ascending(grid)?;
        let cfg = SiConfig::new(0.0).with_stopping(self.stopping);
        let mut path = Vec::new();
        let mut last = None;
        si_path_with(train, &grid[index..], &cfg, |k, fit| {
            path.push(fit.diagnostics);
            if k == 0 {
                last = Some(fit.predictions.clone());
            }
            Ok(())
        })?;
        let d = *path.last().expect("non-empty path");
        Ok(Fit {
            predictions: last.expect("visited the selected lambda"),
            lambda: d.lambda,
            iterations: d.iterations,
            converged: d.converged,
            path,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub replications: usize,
    pub holdout_fraction: f64,
}

impl SelectionConfig {
    /// Five replications holding out 10% of the observed cells.
    pub fn simulation() -> Self {
        Self {
            replications: 5,
            holdout_fraction: 0.1,
        }
    }

    /// Ten replications holding out 10% of the observed cells.
    pub fn case_study() -> Self {
        Self {
            replications: 10,
            holdout_fraction: 0.1,
        }
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self::simulation()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid: Vec<f64>,
    /// `per_replication[r][k]`: mean validation loss of replication `r` at `grid[k]`.
    pub per_replication: Vec<Vec<f64>>,
    pub mean_loss: Vec<f64>,
    pub selected_index: usize,
    pub selected_lambda: f64,
}

impl ValidationReport {
    fn from_losses(grid: Vec<f64>, per_replication: Vec<Vec<f64>>) -> Self {
        let reps = per_replication.len() as f64;
        let mean_loss: Vec<f64> = (0..grid.len())
            .map(|k| per_replication.iter().map(|r| r[k]).sum::<f64>() / reps)
            .collect();
        let mut selected_index = 0;
        for k in 1..grid.len() {
            if mean_loss[k] < mean_loss[selected_index] {
                selected_index = k;
            }
        }
        Self {
            selected_lambda: grid[selected_index],
            grid,
            per_replication,
            mean_loss,
            selected_index,
        }
    }

    /// Tidy rows `(replication, lambda, loss)`.
    pub fn records(&self) -> Vec<ValidationRecord> {
        self.per_replication
            .iter()
            .enumerate()
            .flat_map(|(r, losses)| {
                self.grid.iter().zip(losses).map(move |(&lambda, &loss)| ValidationRecord {
                    replication: r,
                    lambda,
                    loss,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValidationRecord {
    pub replication: usize,
    pub lambda: f64,
    pub loss: f64,
}

/// Repeated holdout validation: every replication masks a fraction of the
/// observed training entries, fits the full path on the remainder and scores
/// the masked entries at each `lambda`.
pub fn select_lambda(
    method: &dyn PathMethod,
    train: &SparseRatingMatrix,
    grid: &[f64],
    config: &SelectionConfig,
    seed: u64,
) -> Result<ValidationReport> {
    check_ascending(grid)?;
    let masks = holdout_masks(train, config.holdout_fraction, config.replications, seed)?;
    let loss = method.validation_loss();
    let per_replication = map_collect(masks, |mask| {
        let mut losses = vec![f64::NAN; grid.len()];
        method.fit_path(&mask.train, grid, &mut |k, pred| {
            let total: f64 = mask
                .test
                .iter()
                .map(|e| loss.evaluate(f64::from(e.value) - pred[(e.row, e.col)]))
                .sum();
            losses[k] = total / mask.test.len().max(1) as f64;
            Ok(())
        })?;
        Ok(losses)
    })?;
    Ok(ValidationReport::from_losses(grid.to_vec(), per_replication))
}

/// Selects `lambda` on `train` and refits on all of it at the selected value.
pub fn select_and_fit(
    method: &dyn PathMethod,
    train: &SparseRatingMatrix,
    config: &SelectionConfig,
    seed: u64,
) -> Result<(ValidationReport, Fit)> {
    let grid = method.grid(train)?;
    let report = select_lambda(method, train, &grid, config, seed)?;
    let fit = method.fit_at(train, &grid, report.selected_index)?;
    Ok((report, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating_matrix::{Entry, RatingScale};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use std::sync::Mutex;

    #[test]
    fn grid_endpoints_and_length() {
        let g = lambda_grid(1.0).unwrap();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[9] - 1.0).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let g = lambda_grid(50.0).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[9] - 50.0).abs() < 1e-12);
        assert!(lambda_grid(0.0).is_err());
    }

    #[test]
    fn all_zero_centered_data_has_no_grid() {
        let r = SparseRatingMatrix::from_triplets(3, 2, 5, [(0, 0, 3), (1, 1, 2)]).unwrap();
        assert!(rdmc_lambda_grid(&r).is_err());
    }

    fn random_train(seed: u64) -> SparseRatingMatrix {
        let mut rng = rng_from_seed(seed);
        let mut entries = Vec::new();
        for j in 0..8 {
            for i in 0..20 {
                if i == j || rng.random_bool(0.5) {
                    entries.push(Entry::new(i, j, rng.random_range(1..=5)));
                }
            }
        }
        SparseRatingMatrix::new(20, 8, RatingScale::uniform(8, 5), entries).unwrap()
    }

    /// Records every training matrix it is fitted on and predicts a
    /// constant that depends on the grid index.
    struct Audit {
        seen: Mutex<Vec<SparseRatingMatrix>>,
    }

    impl PathMethod for Audit {
        fn validation_loss(&self) -> Loss {
            Loss::absolute()
        }
        fn grid(&self, _: &SparseRatingMatrix) -> Result<Vec<f64>> {
            Ok(vec![1.0, 2.0, 3.0])
        }
        fn fit_path(
            &self,
            train: &SparseRatingMatrix,
            grid: &[f64],
            visit: &mut dyn FnMut(usize, &Mat<f64>) -> Result<()>,
        ) -> Result<()> {
            self.seen.lock().unwrap().push(train.clone());
            for (k, &l) in grid.iter().enumerate() {
                visit(k, &Mat::from_fn(train.rows(), train.cols(), |_, _| l + 1.0))?;
            }
            Ok(())
        }
        fn fit_at(&self, _: &SparseRatingMatrix, _: &[f64], _: usize) -> Result<Fit> {
            unreachable!()
        }
    }

    #[test]
    fn validation_entries_are_never_fitted() {
        let train = random_train(5);
        let audit = Audit {
            seen: Mutex::new(Vec::new()),
        };
        let cfg = SelectionConfig::simulation();
        let report = select_lambda(&audit, &train, &[1.0, 2.0, 3.0], &cfg, 99).unwrap();
        let masks = holdout_masks(&train, cfg.holdout_fraction, cfg.replications, 99).unwrap();
        let seen = audit.seen.lock().unwrap();
        assert_eq!(seen.len(), masks.len());
        for mask in &masks {
            let fitted = seen.iter().find(|s| **s == mask.train).expect("fit on mask");
            for e in &mask.test {
                assert!(fitted.get(e.row, e.col).is_none());
            }
        }
        // Mean is the plain average of the replication losses.
        for k in 0..3 {
            let mean: f64 = report.per_replication.iter().map(|r| r[k]).sum::<f64>() / 5.0;
            assert!((report.mean_loss[k] - mean).abs() < 1e-15);
        }
        let records = report.records();
        assert_eq!(records.len(), 15);
    }

    #[test]
    fn selection_ties_and_order_independence() {
        let grid = vec![0.1, 0.2, 0.3];
        let a = ValidationReport::from_losses(grid.clone(), vec![vec![1.0, 0.5, 0.5], vec![1.0, 0.7, 0.7]]);
        assert_eq!(a.selected_index, 1);
        let b = ValidationReport::from_losses(grid.clone(), vec![vec![1.0, 0.7, 0.7], vec![1.0, 0.5, 0.5]]);
        assert_eq!(a.selected_lambda, b.selected_lambda);
        let single = ValidationReport::from_losses(vec![0.4], vec![vec![2.0]]);
        assert_eq!(single.selected_lambda, 0.4);
    }

    #[test]
    fn rdmc_selection_runs_end_to_end() {
        let train = random_train(8);
        let method = RdmcMethod {
            loss: Loss::pseudo_huber(),
            stopping: Stopping::Liberal,
        };
        let (report, fit) = select_and_fit(&method, &train, &SelectionConfig::simulation(), 3).unwrap();
        assert_eq!(report.grid.len(), 10);
        assert_eq!(fit.lambda, report.selected_lambda);
        assert_eq!(fit.path.len(), report.selected_index + 1);
        for e in train.entries() {
            assert_eq!(fit.predictions[(e.row, e.col)], f64::from(e.value));
        }

        let si = SoftImputeMethod {
            stopping: Stopping::Liberal,
        };
        let (report, fit) = select_and_fit(&si, &train, &SelectionConfig::simulation(), 3).unwrap();
        assert_eq!(fit.path.len(), 10 - report.selected_index);
    }
}
