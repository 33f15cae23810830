//! Synthetic rating data: a low-rank recommender design with item popularity
//! shifts and MNAR/MCAR missingness, and a survey design with correlated
//! constructs, reverse-keyed items, abandonment and careless respondents.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, Side};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rating_matrix::{split_train_test, DenseRatings, Entry, SparseRatingMatrix};
use crate::rng::{derive_seed, rng_from_seed, round_count, Rng as SimRng};

/// Share of ratings expected in the top category for an item shifted by
/// the maximal mean shift.
pub const TOP_CATEGORY_SHARE: f64 = 0.4;
/// Missing proportion of the most popular item under MNAR.
pub const MNAR_MIN_MISSING: f64 = 0.4;
/// Missing proportion of the least popular item under MNAR.
pub const MNAR_MAX_MISSING: f64 = 0.99;
/// Correlation base of the survey's block-Toeplitz covariance.
pub const SURVEY_CORRELATION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Missingness {
    Mnar,
    Mcar,
}

impl Missingness {
    pub fn name(self) -> &'static str {
        match self {
            Missingness::Mnar => "mnar",
            Missingness::Mcar => "mcar",
        }
    }
}

impl fmt::Display for Missingness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Missingness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnar" => Ok(Missingness::Mnar),
            "mcar" => Ok(Missingness::Mcar),
            other => Err(Error::InvalidParameter(format!("unknown missingness `{other}`"))),
        }
    }
}

/// Breakpoints between categories for the recommender design.
pub fn recommender_breakpoints(levels: u8) -> Result<Vec<f64>> {
    match levels {
        3 => Ok(vec![0.0, 1.5]),
        5 => Ok(vec![-1.5, -0.5, 0.5, 1.5]),
        10 => Ok((0..9).map(|k| -2.0 + 0.5 * f64::from(k)).collect()),
        other => Err(Error::InvalidParameter(format!(
            "the recommender design supports 3, 5 or 10 categories, not {other}"
        ))),
    }
}

/// Equispaced breakpoints `-K/2 + 1, ..., K/2 - 1`.
pub fn survey_breakpoints(levels: u8) -> Vec<f64> {
    let half = f64::from(levels) / 2.0;
    (1..levels).map(|k| -half + f64::from(k)).collect()
}

/// Category (1-based) of a latent value: one plus the number of breakpoints
/// below it.
pub fn discretize(z: f64, breakpoints: &[f64]) -> u8 {
    1 + breakpoints.iter().filter(|&&b| z > b).count() as u8
}

/// Mean shift that puts `TOP_CATEGORY_SHARE` of a standard normal latent
/// above the top breakpoint.
pub fn mean_shift_max(breakpoints: &[f64]) -> f64 {
    let top = *breakpoints.last().expect("at least one breakpoint");
    let normal = Normal::standard();
    top - normal.inverse_cdf(1.0 - TOP_CATEGORY_SHARE)
}

/// Ground truth and observed data of one simulated data set. Per-column
/// arrays follow the column order of `full`.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub full: DenseRatings,
    /// Continuous latent values before mean shifts.
    pub latent: Mat<f64>,
    pub shifts: Vec<f64>,
    pub shift_max: f64,
    pub observed: SparseRatingMatrix,
    pub careless_rows: Vec<usize>,
    /// Survey only: original item index at each survey position.
    pub item_order: Option<Vec<usize>>,
    /// Survey only: whether each column is reverse-keyed.
    pub reverse_keyed: Vec<bool>,
}

impl SimTruth {
    /// Missing cells of `observed`, excluding careless rows.
    pub fn evaluation_cells(&self) -> Vec<(usize, usize)> {
        let mut careless = vec![false; self.full.rows()];
        for &i in &self.careless_rows {
            careless[i] = true;
        }
        let mask = self.observed.observed_mask();
        let n = self.full.rows();
        (0..self.full.cols())
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .filter(|&(i, j)| !mask[j * n + i] && !careless[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderSimConfig {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub levels: u8,
    pub missingness: Missingness,
    pub mcar_fraction: f64,
    pub seed: u64,
}

impl Default for RecommenderSimConfig {
    fn default() -> Self {
        Self {
            rows: 300,
            cols: 200,
            rank: 20,
            levels: 5,
            missingness: Missingness::Mnar,
            mcar_fraction: 0.7,
            seed: 0,
        }
    }
}

impl RecommenderSimConfig {
    pub fn validate(&self) -> Result<()> {
        recommender_breakpoints(self.levels)?;
        if self.rank == 0 || self.rank > self.rows.min(self.cols) {
            return Err(Error::InvalidParameter(format!(
                "rank {} must lie in 1..={}",
                self.rank,
                self.rows.min(self.cols)
            )));
        }
        if !(self.mcar_fraction > 0.0 && self.mcar_fraction < 1.0) {
            return Err(Error::InvalidParameter("mcar_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Complete recommender data: `Z* = (A B^T + E) / sqrt(q + 1)`, plus a mean
/// shift per column drawn uniformly from `[-s_max, s_max]`, discretized by
/// the design's breakpoints. Every cell is observed.
pub fn gen_recommender(config: &RecommenderSimConfig) -> Result<SimTruth> {
    gen_recommender_with_shifts(config, None)
}

/// As [`gen_recommender`], optionally with fixed column shifts.
pub fn gen_recommender_with_shifts(config: &RecommenderSimConfig, shifts: Option<&[f64]>) -> Result<SimTruth> {
    config.validate()?;
    let (n, p, q) = (config.rows, config.cols, config.rank);
    let breakpoints = recommender_breakpoints(config.levels)?;
    let shift_max = mean_shift_max(&breakpoints);
    let mut rng = rng_from_seed(derive_seed(config.seed, 0));

    let a = standard_normal_matrix(n, q, &mut rng);
    let b = standard_normal_matrix(p, q, &mut rng);
    let noise = standard_normal_matrix(n, p, &mut rng);
    let scale = 1.0 / ((q + 1) as f64).sqrt();
    let product = &a * b.transpose();
    let latent = Mat::from_fn(n, p, |i, j| (product[(i, j)] + noise[(i, j)]) * scale);

    let shifts = match shifts {
        Some(s) if s.len() == p => s.to_vec(),
        Some(s) => {
            return Err(Error::DimensionMismatch(format!("{} shifts for {p} columns", s.len())))
        }
        None => {
            let u = Uniform::new_inclusive(-shift_max, shift_max).expect("valid range");
            (0..p).map(|_| u.sample(&mut rng)).collect()
        }
    };
    let full = DenseRatings::from_fn(n, p, config.levels, |i, j| discretize(latent[(i, j)] + shifts[j], &breakpoints));
    Ok(SimTruth {
        observed: full.to_sparse(),
        full,
        latent,
        shifts,
        shift_max,
        careless_rows: Vec::new(),
        item_order: None,
        reverse_keyed: vec![false; p],
    })
}

/// Missing proportion of a column with mean shift `shift`: the negated shift
/// mapped linearly from `[-s_max, s_max]` to `[0.4, 0.99]`.
pub fn mnar_missing_share(shift: f64, shift_max: f64) -> f64 {
    MNAR_MIN_MISSING + (MNAR_MAX_MISSING - MNAR_MIN_MISSING) * (shift_max - shift) / (2.0 * shift_max)
}

/// Removes `round(pi_j * n)` uniformly chosen cells of every column, with
/// `pi_j` from [`mnar_missing_share`].
pub fn inject_mnar(truth: &SimTruth, seed: u64) -> SparseRatingMatrix {
    let mut rng = rng_from_seed(seed);
    let n = truth.full.rows();
    let mut removed = vec![false; n * truth.full.cols()];
    for (j, &s) in truth.shifts.iter().enumerate() {
        let count = round_count(mnar_missing_share(s, truth.shift_max) * n as f64).min(n);
        for i in index::sample(&mut rng, n, count) {
            removed[j * n + i] = true;
        }
    }
    truth
        .full
        .to_sparse()
        .filter_entries(|e| !removed[e.col * n + e.row])
}

/// Removes `round(fraction * n * p)` uniformly chosen cells; a column left
/// empty gets one cell back.
pub fn inject_mcar(truth: &SimTruth, fraction: f64, seed: u64) -> Result<SparseRatingMatrix> {
    Ok(split_train_test(&truth.full.to_sparse(), fraction, seed)?.train)
}

/// Generates recommender data and applies the configured missingness.
pub fn simulate_recommender(config: &RecommenderSimConfig) -> Result<SimTruth> {
    let mut truth = gen_recommender(config)?;
    let seed = derive_seed(config.seed, 1);
    truth.observed = match config.missingness {
        Missingness::Mnar => inject_mnar(&truth, seed),
        Missingness::Mcar => inject_mcar(&truth, config.mcar_fraction, seed)?,
    };
    Ok(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveySimConfig {
    pub rows: usize,
    pub constructs: usize,
    pub items_per_construct: usize,
    pub levels: u8,
    pub abandonment: f64,
    pub careless: f64,
    pub seed: u64,
}

impl Default for SurveySimConfig {
    fn default() -> Self {
        Self {
            rows: 300,
            constructs: 10,
            items_per_construct: 8,
            levels: 7,
            abandonment: 0.2,
            careless: 0.0,
            seed: 0,
        }
    }
}

impl SurveySimConfig {
    pub fn items(&self) -> usize {
        self.constructs * self.items_per_construct
    }

    pub fn validate(&self) -> Result<()> {
        if self.constructs == 0 || self.items_per_construct == 0 || self.rows == 0 {
            return Err(Error::InvalidParameter("survey dimensions must be positive".into()));
        }
        if self.levels < 2 {
            return Err(Error::InvalidParameter("a survey item needs at least two categories".into()));
        }
        for (name, f) in [("abandonment", self.abandonment), ("careless", self.careless)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!("{name} fraction must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Block-Toeplitz covariance: unit diagonal, and `0.6^(|k - l| + 1)` between
/// items of constructs `k` and `l`.
pub fn survey_covariance(constructs: usize, items_per_construct: usize) -> Mat<f64> {
    let p = constructs * items_per_construct;
    Mat::from_fn(p, p, |a, b| {
        if a == b {
            1.0
        } else {
            let (k, l) = (a / items_per_construct, b / items_per_construct);
            SURVEY_CORRELATION.powi(k.abs_diff(l) as i32 + 1)
        }
    })
}

/// Complete survey responses. Latent rows are `N(0, Sigma)`; every construct
/// gets one mean shift from `[0, s_max]`; the second half of each construct's
/// items is reverse-keyed; columns are then put in one random survey order.
pub fn gen_survey(config: &SurveySimConfig) -> Result<SimTruth> {
    config.validate()?;
    let (n, r) = (config.rows, config.items_per_construct);
    let p = config.items();
    let mut rng = rng_from_seed(derive_seed(config.seed, 0));

    let sigma = survey_covariance(config.constructs, r);
    let chol = sigma.llt(Side::Lower).map_err(|_| {
        Error::InvalidParameter("survey covariance is not positive definite".into())
    })?;
    let draws = standard_normal_matrix(n, p, &mut rng);
    let latent_by_item = &draws * chol.L().transpose();

    let breakpoints = survey_breakpoints(config.levels);
    let shift_max = mean_shift_max(&breakpoints);
    let u = Uniform::new_inclusive(0.0, shift_max).expect("valid range");
    let construct_shifts: Vec<f64> = (0..config.constructs).map(|_| u.sample(&mut rng)).collect();

    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);

    let k = config.levels;
    let reversed_item = |item: usize| item % r >= r - r / 2;
    let latent = Mat::from_fn(n, p, |i, t| latent_by_item[(i, order[t])]);
    let shifts: Vec<f64> = order.iter().map(|&item| construct_shifts[item / r]).collect();
    let reverse_keyed: Vec<bool> = order.iter().map(|&item| reversed_item(item)).collect();
    let full = DenseRatings::from_fn(n, p, k, |i, t| {
        let c = discretize(latent[(i, t)] + shifts[t], &breakpoints);
        if reverse_keyed[t] {
            k + 1 - c
        } else {
            c
        }
    });
    Ok(SimTruth {
        observed: full.to_sparse(),
        full,
        latent,
        shifts,
        shift_max,
        careless_rows: Vec::new(),
        item_order: Some(order),
        reverse_keyed,
    })
}

/// `round(fraction * n)` respondents stop at a uniformly chosen survey
/// position; that item and all later ones become missing.
pub fn inject_abandonment(ratings: &SparseRatingMatrix, fraction: f64, seed: u64) -> SparseRatingMatrix {
    let mut rng = rng_from_seed(seed);
    let n = ratings.rows();
    let mut stop = vec![usize::MAX; n];
    for i in index::sample(&mut rng, n, round_count(fraction * n as f64).min(n)) {
        stop[i] = rng.random_range(0..ratings.cols());
    }
    ratings.filter_entries(|e| e.col < stop[e.row])
}

/// Replaces the observed answers of `round(fraction * n)` respondents by a
/// fair coin between the two extreme categories.
pub fn inject_careless(ratings: &SparseRatingMatrix, fraction: f64, seed: u64) -> (SparseRatingMatrix, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let n = ratings.rows();
    let mut rows: Vec<usize> = index::sample(&mut rng, n, round_count(fraction * n as f64).min(n)).into_vec();
    rows.sort_unstable();
    if rows.is_empty() {
        return (ratings.clone(), rows);
    }
    let mut careless = vec![false; n];
    for &i in &rows {
        careless[i] = true;
    }
    let mut entries: Vec<Entry> = ratings.entries().to_vec();
    // Row-major pass so each respondent's answers are drawn together.
    entries.sort_unstable_by_key(|e| (e.row, e.col));
    for e in entries.iter_mut().filter(|e| careless[e.row]) {
        e.value = if rng.random_bool(0.5) { 1 } else { ratings.levels(e.col) };
    }
    let out = SparseRatingMatrix::new(n, ratings.cols(), ratings.scale().clone(), entries)
        .expect("replacing values keeps the matrix valid");
    (out, rows)
}

/// Generates survey data, then applies abandonment and careless responding.
pub fn simulate_survey(config: &SurveySimConfig) -> Result<SimTruth> {
    let mut truth = gen_survey(config)?;
    let abandoned = inject_abandonment(&truth.observed, config.abandonment, derive_seed(config.seed, 1));
    let (observed, careless_rows) = inject_careless(&abandoned, config.careless, derive_seed(config.seed, 2));
    truth.observed = observed;
    truth.careless_rows = careless_rows;
    Ok(truth)
}

/// Mean sample correlation between latent items of the same construct.
pub fn within_construct_correlation(truth: &SimTruth, items_per_construct: usize) -> f64 {
    let order = truth.item_order.as_ref().expect("survey data");
    let n = truth.latent.nrows();
    let p = truth.latent.ncols();
    let mut position = vec![0; p];
    for (t, &item) in order.iter().enumerate() {
        position[item] = t;
    }
    let column = |t: usize| -> Vec<f64> { (0..n).map(|i| truth.latent[(i, t)]).collect() };
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..p {
        for b in (a + 1)..p {
            if a / items_per_construct == b / items_per_construct {
                total += correlation(&column(position[a]), &column(position[b]));
                pairs += 1;
            }
        }
    }
    total / pairs as f64
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
