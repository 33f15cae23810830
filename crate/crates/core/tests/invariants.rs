use proptest::prelude::*;

use rdmc::attacks::{forge_profiles, AttackScheme, AttackSpec};
use rdmc::baselines::{median_impute, mode_impute};
use rdmc::evaluation::{mae, mps};
use rdmc::simulation::{
    discretize, simulate_recommender, simulate_survey, survey_breakpoints, Missingness, RecommenderSimConfig,
    SurveySimConfig,
};
use rdmc::soft_impute::{discretize_predictions, discretize_value};
use rdmc::{
    assemble_completion, center, solve, split_train_test, Entry, Loss, LossKind, RatingScale, SolverConfig,
    SparseRatingMatrix,
};

/// Random matrix with at least one rating in every column.
fn ratings(rows: usize, cols: usize, levels: u8) -> impl Strategy<Value = SparseRatingMatrix> {
    proptest::collection::vec(proptest::option::weighted(0.5, 1..=levels), rows * cols).prop_map(move |cells| {
        let mut entries = Vec::new();
        for (k, v) in cells.into_iter().enumerate() {
            let (i, j) = (k % rows, k / rows);
            match v {
                Some(v) => entries.push(Entry::new(i, j, v)),
                None if i == j % rows => entries.push(Entry::new(i, j, 1)),
                None => {}
            }
        }
        SparseRatingMatrix::new(rows, cols, RatingScale::uniform(cols, levels), entries).unwrap()
    })
}

fn loss_kind() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::PseudoHuber),
        Just(LossKind::Absolute),
        Just(LossKind::Truncated),
        Just(LossKind::Squared)
    ]
}

fn scheme() -> impl Strategy<Value = AttackScheme> {
    prop_oneof![
        Just(AttackScheme::Average),
        Just(AttackScheme::ReverseBandwagon),
        Just(AttackScheme::LoveHate)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn losses_are_even_and_monotone(kind in loss_kind(), a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let loss = Loss::with_defaults(kind, 7);
        prop_assert_eq!(loss.evaluate(a), loss.evaluate(-a));
        if a.abs() <= b.abs() {
            prop_assert!(loss.evaluate(a) <= loss.evaluate(b) + 1e-12);
        }
    }

    #[test]
    fn solver_output_is_discrete_and_keeps_observed(
        r in ratings(9, 6, 5),
        kind in loss_kind(),
        lambda in 0.05f64..3.0,
        max_iter in 1usize..12,
    ) {
        let c = center(&r).unwrap();
        let config = SolverConfig { max_iter, ..SolverConfig::new(lambda, Loss::with_defaults(kind, 5)) };
        let s = solve(&c, &config, None).unwrap();
        prop_assert!(s.diagnostics.iterations <= max_iter);
        for j in 0..r.cols() {
            for i in 0..r.rows() {
                prop_assert!(c.category_index(j, s.low[(i, j)]).is_some());
            }
        }
        let completed = assemble_completion(&s.low, &c, &r).unwrap();
        for e in r.entries() {
            prop_assert_eq!(completed.get(e.row, e.col), e.value);
        }
        for j in 0..r.cols() {
            for i in 0..r.rows() {
                prop_assert!((1..=5).contains(&completed.get(i, j)));
            }
        }
    }

    #[test]
    fn centering_round_trips(r in ratings(7, 5, 10)) {
        let c = center(&r).unwrap();
        for (i, j, x) in c.observed() {
            prop_assert_eq!(x + c.medians()[j], f64::from(r.get(i, j).unwrap()));
        }
        let mut low = c.projected();
        for j in 0..r.cols() {
            for i in 0..r.rows() {
                if r.get(i, j).is_none() {
                    low[(i, j)] = 1.0 - c.medians()[j];
                }
            }
        }
        let completed = assemble_completion(&low, &c, &r).unwrap();
        for e in r.entries() {
            prop_assert_eq!(completed.get(e.row, e.col), e.value);
        }
    }

    #[test]
    fn split_partitions_observed_entries(r in ratings(10, 6, 5), seed in any::<u64>(), fraction in 0.05f64..0.6) {
        let s = split_train_test(&r, fraction, seed).unwrap();
        prop_assert_eq!(s.train.nnz() + s.test.len(), r.nnz());
        for e in &s.test {
            prop_assert_eq!(r.get(e.row, e.col), Some(e.value));
            prop_assert!(s.train.get(e.row, e.col).is_none());
        }
        for j in 0..r.cols() {
            prop_assert!(s.train.column_count(j) >= 1);
        }
        let again = split_train_test(&r, fraction, seed).unwrap();
        prop_assert_eq!(again.test, s.test);
    }

    #[test]
    fn discretizing_is_idempotent(y in -5.0f64..15.0, levels in 2u8..=10) {
        let d = discretize_value(y, levels);
        prop_assert!((1..=levels).contains(&d));
        prop_assert_eq!(discretize_value(f64::from(d), levels), d);
    }

    #[test]
    fn baselines_stay_on_the_scale(r in ratings(8, 5, 7), seed in any::<u64>()) {
        let mode = mode_impute(&r, seed).unwrap();
        let median = median_impute(&r).unwrap();
        let rounded = discretize_predictions(&median, r.scale());
        for j in 0..r.cols() {
            for i in 0..r.rows() {
                prop_assert!((1..=7).contains(&mode.get(i, j)));
                prop_assert!((1..=7).contains(&rounded.get(i, j)));
            }
        }
    }

    #[test]
    fn attacks_only_append_rows(scheme in scheme(), epsilon in 0.05f64..0.5, seed in any::<u64>()) {
        let truth = simulate_recommender(&RecommenderSimConfig {
            rows: 60, cols: 40, rank: 3, levels: 5, missingness: Missingness::Mcar, mcar_fraction: 0.3, seed: 1,
        }).unwrap();
        let r = truth.observed;
        let target = 3;
        let mut spec = AttackSpec::new(scheme, epsilon, seed);
        spec.min_selected_ratings = 1;
        let a = forge_profiles(&r, target, &spec).unwrap();
        let fakes = (epsilon * r.column_count(target) as f64).round() as usize;
        prop_assert_eq!(a.fake_rows, fakes);
        prop_assert_eq!(a.matrix.rows(), r.rows() + fakes);
        for i in 0..r.rows() {
            for j in 0..r.cols() {
                prop_assert_eq!(a.matrix.get(i, j), r.get(i, j));
            }
        }
        for f in 0..fakes {
            let row = r.rows() + f;
            prop_assert_eq!(a.matrix.get(row, target), Some(1));
            let support = (0..r.cols()).filter(|&j| a.matrix.get(row, j).is_some()).count();
            prop_assert_eq!(support, 1 + a.selected.len() + a.fillers[f].len());
        }
        prop_assert_eq!(forge_profiles(&r, target, &spec).unwrap(), a);
    }

    #[test]
    fn mae_ignores_cell_order(r in ratings(6, 4, 5), seed in any::<u64>()) {
        let pred = median_impute(&r).unwrap();
        let mode = mode_impute(&r, seed).unwrap();
        let mut cells: Vec<(usize, usize)> = (0..6).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        let forward = mae(|i, j| f64::from(mode.get(i, j)), &pred, &cells).unwrap();
        cells.reverse();
        let backward = mae(|i, j| f64::from(mode.get(i, j)), &pred, &cells).unwrap();
        prop_assert!((forward - backward).abs() < 1e-12);
        prop_assert_eq!(mps(&pred, &pred, 0, &[0, 1, 2]).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn recommender_data_is_deterministic_and_on_scale(seed in any::<u64>(), levels in prop_oneof![Just(3u8), Just(5), Just(10)]) {
        let config = RecommenderSimConfig { rows: 50, cols: 30, rank: 4, levels, seed, ..RecommenderSimConfig::default() };
        let a = simulate_recommender(&config).unwrap();
        let b = simulate_recommender(&config).unwrap();
        prop_assert_eq!(&a.observed, &b.observed);
        prop_assert_eq!(&a.full, &b.full);
        prop_assert_eq!(&a.shifts, &b.shifts);
        for e in a.observed.entries() {
            prop_assert_eq!(a.full.get(e.row, e.col), e.value);
        }
        for j in 0..30 {
            for i in 0..50 {
                prop_assert!((1..=levels).contains(&a.full.get(i, j)));
            }
        }
    }

    #[test]
    fn survey_items_are_reverse_keyed_cell_by_cell(seed in any::<u64>(), careless in 0.0f64..0.5) {
        let config = SurveySimConfig { rows: 40, constructs: 3, items_per_construct: 4, careless, seed, ..SurveySimConfig::default() };
        let t = simulate_survey(&config).unwrap();
        let breakpoints = survey_breakpoints(config.levels);
        let k = config.levels;
        for j in 0..config.items() {
            for i in 0..config.rows {
                let plain = discretize(t.latent[(i, j)] + t.shifts[j], &breakpoints);
                let expected = if t.reverse_keyed[j] { k + 1 - plain } else { plain };
                prop_assert_eq!(t.full.get(i, j), expected);
            }
        }
        prop_assert_eq!(t.careless_rows.len(), (careless * 40.0).round() as usize);
        for e in t.observed.entries() {
            if t.careless_rows.contains(&e.row) {
                prop_assert!(e.value == 1 || e.value == k);
            } else {
                prop_assert_eq!(t.full.get(e.row, e.col), e.value);
            }
        }
    }
}

#[test]
fn mnar_missingness_falls_with_the_shift() {
    let t = simulate_recommender(&RecommenderSimConfig {
        rows: 400,
        cols: 60,
        rank: 5,
        levels: 5,
        seed: 11,
        ..RecommenderSimConfig::default()
    })
    .unwrap();
    let mut by_shift: Vec<(f64, usize)> = (0..60).map(|j| (t.shifts[j], t.observed.column_count(j))).collect();
    by_shift.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(by_shift.windows(2).all(|w| w[0].1 <= w[1].1 + 1), "{by_shift:?}");
}
