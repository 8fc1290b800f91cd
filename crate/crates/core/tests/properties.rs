use std::collections::BTreeSet;

use proptest::prelude::*;
use qsat_core::conformal::{calibrate, CalibrationProtocol};
use qsat_core::data::{
    balance_by_design, parse_csv, to_csv, train_test_split, Dataset, DesignType, Metric, Provenance, ScoreSet,
    Scores, StudyRecord,
};
use qsat_core::eval::{compute_metrics, kfold_split, MetricUnit};
use qsat_core::matrix::Matrix;
use qsat_core::preprocess::{inverse_log_target, log_target, trim_outliers, ScalerParams, TrimConfig};

fn record() -> impl Strategy<Value = StudyRecord> {
    (
        0usize..5,
        proptest::collection::vec(prop::sample::select(vec![10u32, 15, 20, 25]), Metric::COUNT),
        1u32..500,
    )
        .prop_map(|(d, s, n)| StudyRecord {
            design: DesignType::ALL[d],
            scores: Scores(s.try_into().unwrap()),
            sample_size: n,
        })
}

/// At least `min` records of every design, plus extras.
fn dataset(min: usize) -> impl Strategy<Value = Dataset> {
    (
        proptest::collection::vec(record(), 5 * min),
        proptest::collection::vec(record(), 0..40),
    )
        .prop_map(move |(mut base, extra)| {
            for (i, r) in base.iter_mut().enumerate() {
                r.design = DesignType::ALL[i % 5];
            }
            base.extend(extra);
            Dataset::new(base, Provenance::Synthetic)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(ds in dataset(1)) {
        let text = to_csv(&ds);
        let back = parse_csv(&text, &ScoreSet::default()).unwrap();
        prop_assert_eq!(back.records, ds.records);
    }

    #[test]
    fn split_is_a_stratified_partition(ds in dataset(2), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let (train, test) = train_test_split(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let mut all: Vec<StudyRecord> = train.records.iter().chain(&test.records).copied().collect();
        let mut orig = ds.records.clone();
        let key = |r: &StudyRecord| (r.design, r.scores.0, r.sample_size);
        all.sort_by_key(key);
        orig.sort_by_key(key);
        prop_assert_eq!(all, orig);
        for d in DesignType::ALL {
            prop_assert!(train.design_counts().get(&d).copied().unwrap_or(0) >= 1);
            prop_assert!(test.design_counts().get(&d).copied().unwrap_or(0) >= 1);
        }
        let again = train_test_split(&ds, frac, seed).unwrap();
        prop_assert_eq!(again.0, train);
    }

    #[test]
    fn balance_equalises_to_the_minimum(ds in dataset(1), seed in any::<u64>()) {
        let min = *ds.design_counts().values().min().unwrap();
        let b = balance_by_design(&ds, seed).unwrap();
        prop_assert!(b.design_counts().values().all(|&c| c == min));
    }

    #[test]
    fn folds_partition_the_rows(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = kfold_split(n, k, seed).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..k {
            let test = plan.test_indices(f);
            prop_assert!(!test.is_empty());
            let train: BTreeSet<usize> = plan.train_indices(f).into_iter().collect();
            for i in &test {
                prop_assert!(!train.contains(i));
                prop_assert!(seen.insert(*i));
            }
            prop_assert_eq!(train.len() + test.len(), n);
        }
        prop_assert_eq!(seen.len(), n);
        let sizes = plan.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn scaler_post_conditions(rows in 2usize..60, cols in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| r.random_range(-100.0..100.0)).collect();
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let s = ScalerParams::fit(&x).unwrap();
        let z = s.apply(&x).unwrap();
        for c in 0..cols {
            let v = z.col_values(c);
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rmse_dominates_mae(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..100)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&t, &p, MetricUnit::LogSpace).unwrap();
        prop_assert!(m.rmse + 1e-12 >= m.mae);
    }

    #[test]
    fn log_round_trip(n in 1u32..1_000_000) {
        let z = log_target(f64::from(n)).unwrap();
        prop_assert!((inverse_log_target(z) - f64::from(n)).abs() <= 1e-9 * f64::from(n));
    }

    #[test]
    fn trimming_never_raises_a_design_mean_or_drops_its_minimum(ds in dataset(2)) {
        let trimmed = trim_outliers(&ds, &TrimConfig::default()).unwrap();
        for d in DesignType::ALL {
            let sizes = |x: &Dataset| -> Vec<f64> {
                x.records.iter().filter(|r| r.design == d).map(|r| f64::from(r.sample_size)).collect()
            };
            let (before, after) = (sizes(&ds), sizes(&trimmed));
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!(!after.is_empty());
            prop_assert!(mean(&after) <= mean(&before) + 1e-12);
            let min = before.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(after.contains(&min));
        }
    }

    #[test]
    fn intervals_nest_as_alpha_shrinks(
        resid in proptest::collection::vec(-2.0f64..2.0, 5..200),
        pred in 0.0f64..6.0,
    ) {
        let y: Vec<f64> = resid.iter().map(|r| 3.0 + r).collect();
        let cal = calibrate(&y, &vec![3.0; y.len()], CalibrationProtocol::TestSplit).unwrap();
        let mut prev: Option<(u64, Option<u64>)> = None;
        for alpha in [0.5, 0.3, 0.2, 0.1, 0.05, 0.01] {
            let iv = cal.predict_interval(pred, alpha).unwrap();
            if let Some((lo, hi)) = prev {
                prop_assert!(iv.lower <= lo);
                let wider = match (iv.upper, hi) {
                    (None, _) => true,
                    (Some(_), None) => false,
                    (Some(a), Some(b)) => a >= b,
                };
                prop_assert!(wider);
            }
            prev = Some((iv.lower, iv.upper));
        }
    }
}
