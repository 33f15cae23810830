//! Profile-injection nuke attacks: fake user rows that rate a target item at
//! the minimum category.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rating_matrix::{Entry, SparseRatingMatrix};
use crate::rng::{rng_from_seed, round_count};

/// Share of popular columns considered when targets are chosen from
/// observed data only.
pub const POPULAR_SHARE: f64 = 0.1;
/// Shift threshold, relative to the maximal shift, for simulated targets.
pub const TARGET_SHIFT_SHARE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackScheme {
    Average,
    ReverseBandwagon,
    LoveHate,
}

impl AttackScheme {
    pub const ALL: [AttackScheme; 3] = [AttackScheme::Average, AttackScheme::ReverseBandwagon, AttackScheme::LoveHate];

    pub fn name(self) -> &'static str {
        match self {
            AttackScheme::Average => "average",
            AttackScheme::ReverseBandwagon => "reverse-bandwagon",
            AttackScheme::LoveHate => "love-hate",
        }
    }
}

impl fmt::Display for AttackScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attack scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub scheme: AttackScheme,
    /// Fake rows as a fraction of the target's observed ratings.
    pub epsilon: f64,
    /// Filler items per fake row as a fraction of all columns.
    pub filler_fraction: f64,
    /// Selected items (reverse bandwagon) as a fraction of all columns.
    pub selected_fraction: f64,
    /// Minimum observed ratings for a column to count as a selected item.
    pub min_selected_ratings: usize,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(scheme: AttackScheme, epsilon: f64, seed: u64) -> Self {
        Self {
            scheme,
            epsilon,
            filler_fraction: 0.1,
            selected_fraction: 0.1,
            min_selected_ratings: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("attack size {} must be positive", self.epsilon)));
        }
        for (name, f) in [("filler", self.filler_fraction), ("selected", self.selected_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} fraction {f} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Original rows followed by the fake rows.
    pub matrix: SparseRatingMatrix,
    pub target: usize,
    pub fake_rows: usize,
    /// Selected items shared by every fake row (reverse bandwagon only).
    pub selected: Vec<usize>,
    /// Filler columns of each fake row.
    pub fillers: Vec<Vec<usize>>,
}

/// Among columns whose mean shift exceeds 90% of the maximal shift, the one
/// with the highest average observed rating (ties: smaller index).
pub fn select_target_simulation(observed: &SparseRatingMatrix, shifts: &[f64], shift_max: f64) -> Result<usize> {
    if shifts.len() != observed.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} shifts for {} columns",
            shifts.len(),
            observed.cols()
        )));
    }
    let candidates = (0..observed.cols()).filter(|&j| shifts[j] > TARGET_SHIFT_SHARE * shift_max);
    highest_mean(observed, candidates)
        .ok_or_else(|| Error::Attack("no column is shifted far enough to be a target".into()))
}

/// Among the most frequently rated tenth of the columns, the one with the
/// highest average observed rating (ties: smaller index).
pub fn select_target_empirical(observed: &SparseRatingMatrix) -> Result<usize> {
    let p = observed.cols();
    let keep = ((POPULAR_SHARE * p as f64).ceil() as usize).clamp(1, p.max(1));
    let mut by_count: Vec<usize> = (0..p).filter(|&j| observed.column_count(j) > 0).collect();
    by_count.sort_by(|&a, &b| observed.column_count(b).cmp(&observed.column_count(a)).then(a.cmp(&b)));
    by_count.truncate(keep);
    by_count.sort_unstable();
    highest_mean(observed, by_count.into_iter()).ok_or_else(|| Error::Attack("no observed column to target".into()))
}

fn highest_mean(observed: &SparseRatingMatrix, candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in candidates {
        if let Some(m) = observed.column_mean(j) {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((j, m));
            }
        }
    }
    best.map(|(j, _)| j)
}

/// Selected items of the reverse bandwagon scheme: the least liked columns
/// among those with enough ratings, excluding the target.
pub fn unpopular_items(observed: &SparseRatingMatrix, target: usize, count: usize, min_ratings: usize) -> Result<Vec<usize>> {
    let mut eligible: Vec<(usize, f64)> = (0..observed.cols())
        .filter(|&j| j != target && observed.column_count(j) >= min_ratings.max(1))
        .map(|j| (j, observed.column_mean(j).expect("observed column")))
        .collect();
    if eligible.len() < count {
        return Err(Error::Attack(format!(
            "{} columns with at least {min_ratings} ratings, {count} needed",
            eligible.len()
        )));
    }
    eligible.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut selected: Vec<usize> = eligible[..count].iter().map(|&(j, _)| j).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// Appends `round(epsilon * |observed(target)|)` fake rows. Each rates the
/// target at 1 and a fresh random set of `round(0.1 p)` filler columns
/// according to the scheme.
pub fn forge_profiles(observed: &SparseRatingMatrix, target: usize, spec: &AttackSpec) -> Result<AttackResult> {
    spec.validate()?;
    let p = observed.cols();
    if target >= p {
        return Err(Error::InvalidParameter(format!("target column {target} out of range")));
    }
    let mut rng = rng_from_seed(spec.seed);
    let fake_rows = round_count(spec.epsilon * observed.column_count(target) as f64);
    let filler_count = round_count(spec.filler_fraction * p as f64);
    let selected = match spec.scheme {
        AttackScheme::ReverseBandwagon => unpopular_items(
            observed,
            target,
            round_count(spec.selected_fraction * p as f64),
            spec.min_selected_ratings,
        )?,
        _ => Vec::new(),
    };

    let mut excluded = vec![false; p];
    excluded[target] = true;
    for &j in &selected {
        excluded[j] = true;
    }
    let pool: Vec<usize> = (0..p).filter(|&j| !excluded[j]).collect();
    if pool.len() < filler_count {
        return Err(Error::Attack(format!("{} columns available for {filler_count} fillers", pool.len())));
    }
    let modes: Vec<Vec<u8>> = match spec.scheme {
        AttackScheme::Average => (0..p).map(|j| observed.column_modes(j)).collect(),
        _ => Vec::new(),
    };

    let n = observed.rows();
    let mut entries = Vec::with_capacity(fake_rows * (1 + selected.len() + filler_count));
    let mut fillers = Vec::with_capacity(fake_rows);
    for f in 0..fake_rows {
        let row = n + f;
        entries.push(Entry::new(row, target, 1));
        entries.extend(selected.iter().map(|&j| Entry::new(row, j, 1)));
        let mut chosen: Vec<usize> = index::sample(&mut rng, pool.len(), filler_count)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        chosen.sort_unstable();
        for &j in &chosen {
            let value = match spec.scheme {
                AttackScheme::Average => match modes[j].choose(&mut rng) {
                    Some(&m) => m,
                    None => return Err(Error::EmptyColumn { column: j }),
                },
                AttackScheme::ReverseBandwagon => 1,
                AttackScheme::LoveHate => observed.levels(j),
            };
            entries.push(Entry::new(row, j, value));
        }
        fillers.push(chosen);
    }
    Ok(AttackResult {
        matrix: observed.with_appended_rows(fake_rows, entries)?,
        target,
        fake_rows,
        selected,
        fillers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(n: usize, p: usize, density: f64, seed: u64) -> SparseRatingMatrix {
        let mut rng = rng_from_seed(seed);
        let mut triplets = Vec::new();
        for j in 0..p {
            for i in 0..n {
                if i == j % n || rng.random_bool(density) {
                    triplets.push((i, j, rng.random_range(1..=5u8)));
                }
            }
        }
        SparseRatingMatrix::from_triplets(n, p, 5, triplets).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in AttackScheme::ALL {
            assert_eq!(s.name().parse::<AttackScheme>().unwrap(), s);
        }
        assert!("push".parse::<AttackScheme>().is_err());
    }

    #[test]
    fn simulation_target_is_the_best_rated_shifted_column() {
        let r = SparseRatingMatrix::from_triplets(
            2,
            4,
            5,
            [(0, 0, 5), (1, 0, 5), (0, 1, 5), (1, 1, 4), (0, 2, 5), (1, 2, 4), (0, 3, 2)],
        )
        .unwrap();
        // Column 0 has the best mean but is not shifted enough.
        let shifts = [0.5, 0.95, 0.99, 0.99];
        assert_eq!(select_target_simulation(&r, &shifts, 1.0).unwrap(), 1);
        assert!(select_target_simulation(&r, &[0.0; 4], 1.0).is_err());
        assert!(select_target_simulation(&r, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn empirical_target_prefers_popular_columns() {
        let mut triplets = vec![(0, 0, 5)];
        for j in 1..10 {
            for i in 0..(10 + j) {
                triplets.push((i, j, if j == 7 { 4 } else { 3 }));
            }
        }
        let r = SparseRatingMatrix::from_triplets(20, 10, 5, triplets).unwrap();
        // The top tenth is column 9 only.
        assert_eq!(select_target_empirical(&r).unwrap(), 9);
    }

    #[test]
    fn fake_row_count_follows_the_target_support() {
        let r = random_matrix(300, 30, 0.3, 1);
        let mut triplets: Vec<(usize, usize, u8)> = r.entries().iter().map(|e| (e.row, e.col, e.value)).collect();
        triplets.retain(|t| t.1 != 0);
        triplets.extend((0..250).map(|i| (i, 0, 5)));
        let r = SparseRatingMatrix::from_triplets(300, 30, 5, triplets).unwrap();
        let out = forge_profiles(&r, 0, &AttackSpec::new(AttackScheme::Average, 0.2, 3)).unwrap();
        assert_eq!(out.fake_rows, 50);
        assert_eq!(out.matrix.rows(), 350);
    }

    #[test]
    fn love_hate_rows() {
        let r = random_matrix(40, 50, 0.5, 2);
        let out = forge_profiles(&r, 3, &AttackSpec::new(AttackScheme::LoveHate, 0.5, 4)).unwrap();
        for f in 0..out.fake_rows {
            let row = 40 + f;
            assert_eq!(out.matrix.get(row, 3), Some(1));
            for j in 0..50 {
                let v = out.matrix.get(row, j);
                if j == 3 {
                    continue;
                }
                if out.fillers[f].contains(&j) {
                    assert_eq!(v, Some(5));
                } else {
                    assert_eq!(v, None);
                }
            }
        }
    }

    #[test]
    fn reverse_bandwagon_rows() {
        let r = random_matrix(60, 50, 0.5, 5);
        let out = forge_profiles(&r, 7, &AttackSpec::new(AttackScheme::ReverseBandwagon, 0.3, 6)).unwrap();
        assert_eq!(out.selected.len(), 5);
        let mut means: Vec<(usize, f64)> = (0..50)
            .filter(|&j| j != 7)
            .map(|j| (j, r.column_mean(j).unwrap()))
            .collect();
        means.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst_selected = out.selected.iter().map(|&j| r.column_mean(j).unwrap()).fold(f64::MIN, f64::max);
        assert!(means[5..].iter().all(|&(_, m)| m >= worst_selected));
        for f in 0..out.fake_rows {
            let row = 60 + f;
            let filled: Vec<Entry> = out.matrix.entries().iter().filter(|e| e.row == row).copied().collect();
            assert_eq!(filled.len(), 1 + 5 + 5);
            assert!(filled.iter().all(|e| e.value == 1));
            assert!(out.fillers[f].iter().all(|j| *j != 7 && !out.selected.contains(j)));
        }
    }

    #[test]
    fn reverse_bandwagon_needs_rated_columns() {
        let r = random_matrix(10, 50, 0.5, 5);
        let err = forge_profiles(&r, 0, &AttackSpec::new(AttackScheme::ReverseBandwagon, 0.5, 1));
        assert!(matches!(err, Err(Error::Attack(_))));
    }

    #[test]
    fn average_fillers_use_column_modes() {
        let r = random_matrix(40, 30, 0.6, 8);
        let out = forge_profiles(&r, 1, &AttackSpec::new(AttackScheme::Average, 1.0, 9)).unwrap();
        for (f, cols) in out.fillers.iter().enumerate() {
            for &j in cols {
                let v = out.matrix.get(40 + f, j).unwrap();
                assert!(r.column_modes(j).contains(&v));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let r = random_matrix(10, 10, 0.5, 1);
        assert!(forge_profiles(&r, 0, &AttackSpec::new(AttackScheme::Average, 0.0, 1)).is_err());
        assert!(forge_profiles(&r, 10, &AttackSpec::new(AttackScheme::Average, 0.1, 1)).is_err());
        let mut spec = AttackSpec::new(AttackScheme::Average, 0.1, 1);
        spec.filler_fraction = 1.5;
        assert!(forge_profiles(&r, 0, &spec).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn attacks_only_append(seed in 0u64..10_000, scheme in 0usize..3, eps in 0.05f64..1.0) {
            let r = random_matrix(30, 40, 0.7, seed);
            let spec = AttackSpec::new(AttackScheme::ALL[scheme], eps, seed);
            let target = (seed % 40) as usize;
            let out = forge_profiles(&r, target, &spec).unwrap();
            prop_assert_eq!(out.fake_rows, round_count(eps * r.column_count(target) as f64));
            let original: Vec<usize> = (0..30).collect();
            let all: Vec<usize> = (0..40).collect();
            prop_assert_eq!(&out.matrix.select(&original, &all).unwrap(), &r);
            for e in out.matrix.entries().iter().filter(|e| e.row >= 30) {
                prop_assert!((1..=5).contains(&e.value));
            }
            for f in 0..out.fake_rows {
                let support = out.matrix.entries().iter().filter(|e| e.row == 30 + f).count();
                prop_assert_eq!(support, 1 + out.selected.len() + 4);
                prop_assert_eq!(out.matrix.get(30 + f, target), Some(1));
            }
            prop_assert_eq!(forge_profiles(&r, target, &spec).unwrap(), out);
        }
    }
}
