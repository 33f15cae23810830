//! Naive imputation baselines: column median, discretized column median and
//! column mode.

use faer::Mat;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::Result;
use crate::rating_matrix::{column_medians, DenseRatings, SparseRatingMatrix};
use crate::rng::rng_from_seed;

/// Fills every missing cell with its column median (possibly half-integer).
pub fn median_impute(train: &SparseRatingMatrix) -> Result<Mat<f64>> {
    let medians = column_medians(train)?;
    let mut out = Mat::from_fn(train.rows(), train.cols(), |_, j| medians[j]);
    for e in train.entries() {
        out[(e.row, e.col)] = f64::from(e.value);
    }
    Ok(out)
}

/// Median imputation on the rating scale: a half-integer median is resolved
/// per missing cell by a fair coin between its two neighbouring categories.
pub fn median_impute_discretized(train: &SparseRatingMatrix, seed: u64) -> Result<DenseRatings> {
    let medians = column_medians(train)?;
    let mut rng = rng_from_seed(seed);
    let mut out = DenseRatings::from_fn(train.rows(), train.cols(), train.scale().max_levels(), |_, _| 0);
    for (j, &m) in medians.iter().enumerate() {
        let (low, high) = (m.floor() as u8, m.ceil() as u8);
        let observed = train.column(j);
        let mut next = observed.iter().peekable();
        for i in 0..train.rows() {
            let value = match next.next_if(|e| e.row == i) {
                Some(e) => e.value,
                None if low == high => low,
                None => {
                    if rng.random_bool(0.5) {
                        low
                    } else {
                        high
                    }
                }
            };
            out.set(i, j, value);
        }
    }
    Ok(out)
}

/// Mode imputation; with several modes, each missing cell draws one of them
/// uniformly.
pub fn mode_impute(train: &SparseRatingMatrix, seed: u64) -> Result<DenseRatings> {
    // Validates that every column is observed.
    column_medians(train)?;
    let mut rng = rng_from_seed(seed);
    let mut out = DenseRatings::from_fn(train.rows(), train.cols(), train.scale().max_levels(), |_, _| 0);
    for j in 0..train.cols() {
        let modes = train.column_modes(j);
        let mut next = train.column(j).iter().peekable();
        for i in 0..train.rows() {
            let value = match next.next_if(|e| e.row == i) {
                Some(e) => e.value,
                None => *modes.choose(&mut rng).expect("observed column has a mode"),
            };
            out.set(i, j, value);
        }
    }
    Ok(out)
}
