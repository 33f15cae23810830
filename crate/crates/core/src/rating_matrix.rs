//! Sparse discrete rating matrices.
//!
//! Observed ratings are stored as a coordinate list sorted column-major, with
//! column offsets giving direct access to the observed rows of each column.
//! Every algorithm in the crate scans columns (medians, modes, per-item
//! attack statistics), so this is the only index kept.

use faer::Mat;
use rand::seq::{index, IndexedRandom};
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, round_count};

/// Tolerance used when checking that a real value sits on a category grid.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// One observed rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: u8,
}

impl Entry {
    pub fn new(row: usize, col: usize, value: u8) -> Self {
        Self { row, col, value }
    }
}

/// Number of rating categories per column. Column `j` takes the values
/// `1..=levels(j)` on the original scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingScale {
    levels: Vec<u8>,
}

impl RatingScale {
    pub fn uniform(cols: usize, levels: u8) -> Self {
        assert!(levels >= 1, "a rating scale needs at least one category");
        Self {
            levels: vec![levels; cols],
        }
    }

    pub fn per_column(levels: Vec<u8>) -> Result<Self> {
        if let Some(j) = levels.iter().position(|&k| k == 0) {
            return Err(Error::InvalidParameter(format!(
                "column {j} has an empty rating scale"
            )));
        }
        Ok(Self { levels })
    }

    pub fn cols(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self, col: usize) -> u8 {
        self.levels[col]
    }

    /// Largest category count over all columns.
    pub fn max_levels(&self) -> u8 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Categories of column `col` on the original scale, ascending.
    pub fn categories(&self, col: usize) -> impl Iterator<Item = f64> {
        (1..=self.levels[col]).map(f64::from)
    }

    pub fn contains(&self, col: usize, value: u8) -> bool {
        value >= 1 && value <= self.levels[col]
    }

    fn extended(&self, extra_cols: &[u8]) -> Self {
        let mut levels = self.levels.clone();
        levels.extend_from_slice(extra_cols);
        Self { levels }
    }
}

/// An incomplete `rows x cols` matrix of discrete ratings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseRatingMatrix {
    rows: usize,
    cols: usize,
    scale: RatingScale,
    entries: Vec<Entry>,
    col_ptr: Vec<usize>,
}

impl SparseRatingMatrix {
    pub fn new(rows: usize, cols: usize, scale: RatingScale, mut entries: Vec<Entry>) -> Result<Self> {
        if scale.cols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "rating scale covers {} columns, matrix has {cols}",
                scale.cols()
            )));
        }
        for e in &entries {
            if e.row >= rows || e.col >= cols {
                return Err(Error::OutOfBounds {
                    row: e.row,
                    column: e.col,
                    rows,
                    columns: cols,
                });
            }
            if !scale.contains(e.col, e.value) {
                return Err(Error::InvalidRating {
                    row: e.row,
                    column: e.col,
                    value: i64::from(e.value),
                    levels: scale.levels(e.col),
                });
            }
        }
        entries.sort_unstable_by_key(|e| (e.col, e.row));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].col == w[1].col && w[0].row == w[1].row)
        {
            return Err(Error::DuplicateEntry {
                row: w[0].row,
                column: w[0].col,
            });
        }
        let mut col_ptr = vec![0; cols + 1];
        for e in &entries {
            col_ptr[e.col + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            rows,
            cols,
            scale,
            entries,
            col_ptr,
        })
    }

    /// Builds a matrix whose columns all use the scale `1..=levels`.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        levels: u8,
        triplets: impl IntoIterator<Item = (usize, usize, u8)>,
    ) -> Result<Self> {
        let entries = triplets
            .into_iter()
            .map(|(i, j, v)| Entry::new(i, j, v))
            .collect();
        Self::new(rows, cols, RatingScale::uniform(cols, levels), entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of observed entries, `|Ω|`.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn scale(&self) -> &RatingScale {
        &self.scale
    }

    pub fn levels(&self, col: usize) -> u8 {
        self.scale.levels(col)
    }

    /// All observed entries, sorted by column, then row.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Observed entries of column `col`, sorted by row.
    pub fn column(&self, col: usize) -> &[Entry] {
        &self.entries[self.col_ptr[col]..self.col_ptr[col + 1]]
    }

    pub fn column_count(&self, col: usize) -> usize {
        self.col_ptr[col + 1] - self.col_ptr[col]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        let column = self.column(col);
        column
            .binary_search_by_key(&row, |e| e.row)
            .ok()
            .map(|k| column[k].value)
    }

    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rows];
        for e in &self.entries {
            counts[e.row] += 1;
        }
        counts
    }

    pub fn column_mean(&self, col: usize) -> Option<f64> {
        let column = self.column(col);
        if column.is_empty() {
            return None;
        }
        let sum: f64 = column.iter().map(|e| f64::from(e.value)).sum();
        Some(sum / column.len() as f64)
    }

    /// All modal categories of column `col`, ascending. Empty for an
    /// unobserved column.
    pub fn column_modes(&self, col: usize) -> Vec<u8> {
        let mut counts = vec![0usize; usize::from(self.levels(col)) + 1];
        for e in self.column(col) {
            counts[usize::from(e.value)] += 1;
        }
        let best = counts.iter().copied().max().unwrap_or(0);
        if best == 0 {
            return Vec::new();
        }
        (1..counts.len())
            .filter(|&k| counts[k] == best)
            .map(|k| k as u8)
            .collect()
    }

    /// The submatrix of entries satisfying `keep`, with unchanged dimensions.
    pub fn filter_entries(&self, mut keep: impl FnMut(&Entry) -> bool) -> Self {
        let entries: Vec<Entry> = self.entries.iter().copied().filter(|e| keep(e)).collect();
        let mut col_ptr = vec![0; self.cols + 1];
        for e in &entries {
            col_ptr[e.col + 1] += 1;
        }
        for j in 0..self.cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            scale: self.scale.clone(),
            entries,
            col_ptr,
        }
    }

    /// Appends `extra_rows` rows holding `entries` (row indices relative to
    /// the existing row count are not assumed: they must be absolute).
    pub fn with_appended_rows(&self, extra_rows: usize, entries: Vec<Entry>) -> Result<Self> {
        let mut all = self.entries.clone();
        all.extend(entries);
        Self::new(self.rows + extra_rows, self.cols, self.scale.clone(), all)
    }

    /// Restricts the matrix to `rows` and `cols` (in the given order),
    /// re-indexing densely.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut row_map = vec![usize::MAX; self.rows];
        for (new, &old) in rows.iter().enumerate() {
            row_map[old] = new;
        }
        let mut entries = Vec::new();
        let mut levels = Vec::with_capacity(cols.len());
        for (new_col, &old_col) in cols.iter().enumerate() {
            levels.push(self.levels(old_col));
            for e in self.column(old_col) {
                if row_map[e.row] != usize::MAX {
                    entries.push(Entry::new(row_map[e.row], new_col, e.value));
                }
            }
        }
        Self::new(rows.len(), cols.len(), RatingScale::per_column(levels)?, entries)
    }

    /// Appends empty columns with the given category counts.
    pub fn with_appended_cols(&self, levels: &[u8]) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols + levels.len(),
            self.scale.extended(levels),
            self.entries.clone(),
        )
    }

    /// `P_Ω(R)` as a dense matrix: observed ratings, zero elsewhere.
    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.rows, self.cols);
        for e in &self.entries {
            m[(e.row, e.col)] = f64::from(e.value);
        }
        m
    }

    /// Per-cell observation mask in column-major order.
    pub fn observed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for e in &self.entries {
            mask[e.col * self.rows + e.row] = true;
        }
        mask
    }
}

/// A complete matrix of discrete ratings, column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseRatings {
    rows: usize,
    cols: usize,
    levels: u8,
    data: Vec<u8>,
}

impl DenseRatings {
    pub fn from_fn(rows: usize, cols: usize, levels: u8, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            levels,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> u8 {
        self.levels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[col * self.rows + row] = value;
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| f64::from(self.get(i, j)))
    }

    /// Every cell as an observed entry.
    pub fn to_sparse(&self) -> SparseRatingMatrix {
        let entries = (0..self.cols)
            .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
            .map(|(i, j)| Entry::new(i, j, self.get(i, j)))
            .collect();
        SparseRatingMatrix::new(
            self.rows,
            self.cols,
            RatingScale::uniform(self.cols, self.levels),
            entries,
        )
        .expect("dense ratings are valid by construction")
    }
}

/// Sample median; the midpoint of the two central order statistics for an
/// even count.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median of the observed ratings of every column.
pub fn column_medians(matrix: &SparseRatingMatrix) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    (0..matrix.cols())
        .map(|j| {
            buf.clear();
            buf.extend(matrix.column(j).iter().map(|e| f64::from(e.value)));
            median(&mut buf).ok_or(Error::EmptyColumn { column: j })
        })
        .collect()
}

/// A median-centered rating matrix: `X_ij = R_ij - M_j` on the observed
/// cells, with column `j` taking values in `{k - M_j : k = 1..=K_j}`.
#[derive(Debug, Clone)]
pub struct CenteredMatrix {
    source: SparseRatingMatrix,
    medians: Vec<f64>,
    values: Vec<f64>,
}

impl CenteredMatrix {
    pub fn rows(&self) -> usize {
        self.source.rows()
    }

    pub fn cols(&self) -> usize {
        self.source.cols()
    }

    pub fn source(&self) -> &SparseRatingMatrix {
        &self.source
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    pub fn levels(&self, col: usize) -> u8 {
        self.source.levels(col)
    }

    /// Centered categories of column `col`, ascending.
    pub fn categories(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        let m = self.medians[col];
        self.source.scale().categories(col).map(move |c| c - m)
    }

    /// Observed `(row, X_ij)` pairs of column `col`, sorted by row.
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let start = self.source.col_ptr[col];
        let end = self.source.col_ptr[col + 1];
        self.source.entries[start..end]
            .iter()
            .zip(&self.values[start..end])
            .map(|(e, &x)| (e.row, x))
    }

    /// `(row, col, X_ij)` over all observed cells.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.source
            .entries
            .iter()
            .zip(&self.values)
            .map(|(e, &x)| (e.row, e.col, x))
    }

    /// `P_Ω(X)`: centered values on observed cells, zero elsewhere.
    pub fn projected(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.rows(), self.cols());
        for (i, j, x) in self.observed() {
            m[(i, j)] = x;
        }
        m
    }

    /// Index of the category of column `col` equal to `value`, if any.
    pub fn category_index(&self, col: usize, value: f64) -> Option<u8> {
        let k = (value + self.medians[col]).round();
        let on_grid = (value + self.medians[col] - k).abs() <= GRID_TOLERANCE;
        (on_grid && k >= 1.0 && k <= f64::from(self.levels(col))).then_some(k as u8)
    }
}

pub fn center(matrix: &SparseRatingMatrix) -> Result<CenteredMatrix> {
    let medians = column_medians(matrix)?;
    let values = matrix
        .entries()
        .iter()
        .map(|e| f64::from(e.value) - medians[e.col])
        .collect();
    Ok(CenteredMatrix {
        source: matrix.clone(),
        medians,
        values,
    })
}

/// Maps a centered completion back to the rating scale. Observed cells keep
/// their rating verbatim; unobserved cells get `L_ij + M_j`.
pub fn assemble_completion(
    low_rank: &Mat<f64>,
    centered: &CenteredMatrix,
    ratings: &SparseRatingMatrix,
) -> Result<DenseRatings> {
    let (n, p) = (ratings.rows(), ratings.cols());
    if low_rank.nrows() != n || low_rank.ncols() != p || centered.rows() != n || centered.cols() != p {
        return Err(Error::DimensionMismatch(format!(
            "completion is {}x{}, ratings are {n}x{p}",
            low_rank.nrows(),
            low_rank.ncols()
        )));
    }
    let mut out = DenseRatings::from_fn(n, p, ratings.scale().max_levels(), |_, _| 0);
    for j in 0..p {
        for i in 0..n {
            let v = low_rank[(i, j)];
            let k = centered.category_index(j, v).ok_or(Error::OffGrid {
                row: i,
                column: j,
                value: v,
            })?;
            out.set(i, j, k);
        }
        for e in ratings.column(j) {
            out.set(e.row, j, e.value);
        }
    }
    Ok(out)
}

/// A partition of the observed entries into a training matrix and held-out
/// entries.
#[derive(Debug, Clone)]
pub struct MaskSplit {
    pub train: SparseRatingMatrix,
    pub test: Vec<Entry>,
    pub seed: u64,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )))
    }
}

/// Uniformly random split of the observed entries with
/// `round(fraction * |Ω|)` held out. A column left without training entries
/// gets one of its held-out entries back, in exchange for a random training
/// entry from a column that can spare one.
pub fn split_train_test(matrix: &SparseRatingMatrix, fraction: f64, seed: u64) -> Result<MaskSplit> {
    check_fraction(fraction)?;
    let total = matrix.nnz();
    let n_test = round_count(fraction * total as f64).min(total);
    let mut rng = rng_from_seed(seed);
    let mut is_test = vec![false; total];
    for k in index::sample(&mut rng, total, n_test) {
        is_test[k] = true;
    }

    let mut train_count = vec![0usize; matrix.cols()];
    for (e, &t) in matrix.entries().iter().zip(&is_test) {
        if !t {
            train_count[e.col] += 1;
        }
    }
    for j in 0..matrix.cols() {
        if train_count[j] > 0 || matrix.column_count(j) == 0 {
            continue;
        }
        let start = matrix.col_ptr[j];
        let back = start + rng.random_range(0..matrix.column_count(j));
        is_test[back] = false;
        train_count[j] += 1;
        let donors: Vec<usize> = (0..total)
            .filter(|&k| !is_test[k] && train_count[matrix.entries[k].col] >= 2)
            .collect();
        if let Some(&k) = donors.choose(&mut rng) {
            is_test[k] = true;
            train_count[matrix.entries[k].col] -= 1;
        }
    }

    let test = matrix
        .entries()
        .iter()
        .zip(&is_test)
        .filter(|(_, &t)| t)
        .map(|(e, _)| *e)
        .collect();
    let mut flags = is_test.into_iter();
    let train = matrix.filter_entries(|_| !flags.next().unwrap());
    Ok(MaskSplit { train, test, seed })
}

/// Independent holdout splits for repeated holdout validation. Replication
/// `r` uses the seed `derive_seed(seed, r)`.
pub fn holdout_masks(
    matrix: &SparseRatingMatrix,
    fraction: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<MaskSplit>> {
    check_fraction(fraction)?;
    if replications == 0 {
        return Err(Error::InvalidParameter(
            "at least one holdout replication is required".into(),
        ));
    }
    (0..replications as u64)
        .map(|r| split_train_test(matrix, fraction, derive_seed(seed, r)))
        .collect()
}
