//! Robust discrete matrix completion (RDMC) for incomplete rating-scale data.
//!
//! The crate provides the ADMM solver, Soft-Impute and naive baselines,
//! regularization-path selection by repeated holdout, synthetic data
//! generators with realistic missingness, profile-injection attacks, and an
//! experiment harness producing tidy result records.

pub mod attacks;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod loss;
mod parallel;
pub mod rating_matrix;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod soft_impute;
pub mod solver;
mod timer;

pub use error::{Error, Result};
pub use loss::{Loss, LossKind};
pub use rating_matrix::{
    assemble_completion, center, column_medians, holdout_masks, split_train_test, CenteredMatrix,
    DenseRatings, Entry, MaskSplit, RatingScale, SparseRatingMatrix,
};
pub use solver::{solve, solve_path, Diagnostics, SolverConfig, SolverState, Stopping};
