use std::collections::{BTreeMap, BTreeSet};

use mvgf_core::evaluation::{
    aggregate_fusion_weights, coverage_split, field_aggregate, loyo_split, metrics, stratified_group_kfold,
};
use proptest::prelude::*;

fn scalar_metrics(y: &[f64], yhat: &[f64], y_bar: f64) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mut mae = 0.0;
    let mut mape = 0.0;
    let mut res = 0.0;
    let mut tot = 0.0;
    for i in 0..y.len() {
        mae += (y[i] - yhat[i]).abs();
        mape += (y[i] - yhat[i]).abs() / y[i];
        res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        tot += (y[i] - y_bar) * (y[i] - y_bar);
    }
    (mae / n, 100.0 * mape / n, 1.0 - res / tot)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_scalar_loop(pairs in prop::collection::vec((0.5f64..9.0, 0.0f64..10.0), 2..60)) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let y_bar = y.iter().sum::<f64>() / y.len() as f64;
        let m = metrics(&y, &yhat, y_bar).unwrap();
        let (mae, mape, r2) = scalar_metrics(&y, &yhat, y_bar);
        prop_assert!((m.mae - mae).abs() <= 1e-12);
        prop_assert!((m.mape - mape).abs() <= 1e-12 * mape.max(1.0));
        prop_assert!((m.r2 - r2).abs() <= 1e-12 * r2.abs().max(1.0));
        prop_assert!(m.r2 <= 1.0 && m.mae >= 0.0 && m.mape >= 0.0);
    }

    #[test]
    fn kfold_is_a_partition(
        farm_of in prop::collection::vec(0u32..6, 10..80),
        k in 2usize..11,
        seed in any::<u64>(),
    ) {
        let ff: BTreeMap<u32, u32> = farm_of.iter().enumerate().map(|(f, &farm)| (f as u32 * 3 + 1, farm)).collect();
        let plan = stratified_group_kfold(&ff, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        prop_assert!(plan.check_partition(&ff.keys().copied().collect()).is_ok());
        // Farm counts per fold never differ by more than one.
        let farms: BTreeSet<u32> = ff.values().copied().collect();
        for farm in farms {
            let counts: Vec<usize> = plan.folds.iter()
                .map(|f| f.validation.iter().filter(|x| ff[x] == farm).count())
                .collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn loyo_matches_year_counts(years in prop::collection::vec(2017i32..2023, 2..50)) {
        let fy: BTreeMap<u32, i32> = years.iter().enumerate().map(|(f, &y)| (f as u32, y)).collect();
        let distinct: BTreeSet<i32> = years.iter().copied().collect();
        prop_assume!(distinct.len() >= 2);
        let plan = loyo_split(&fy).unwrap();
        prop_assert!(plan.check_partition(&fy.keys().copied().collect()).is_ok());
        for fold in &plan.folds {
            let year = fold.year.unwrap();
            prop_assert_eq!(fold.validation.len(), years.iter().filter(|&&y| y == year).count());
            prop_assert!(fold.train.iter().all(|f| fy[f] != year));
        }
    }

    #[test]
    fn coverage_low_set_obeys_threshold(cov in prop::collection::vec(0u8..10, 5..40)) {
        let map: BTreeMap<u32, f64> = cov.iter().enumerate().map(|(f, &c)| (f as u32, c as f64 / 10.0)).collect();
        let split = coverage_split(&map).unwrap();
        let mut sorted: Vec<f64> = map.values().copied().collect();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(split.threshold, sorted[4]);
        prop_assert!(split.low.len() >= 5);
        prop_assert_eq!(split.low.len() + split.high.len(), map.len());
        prop_assert!(split.low.iter().all(|f| map[f] <= split.threshold));
        prop_assert!(split.high.iter().all(|f| map[f] > split.threshold));
    }

    #[test]
    fn aggregated_weights_stay_on_simplex(
        logits in prop::collection::vec(prop::array::uniform4(-5.0f64..5.0), 1..50),
        n_groups in 1u32..5,
    ) {
        let alpha: Vec<Vec<f64>> = logits.iter().map(|l| {
            let e: Vec<f64> = l.iter().map(|x| x.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        }).collect();
        let groups: Vec<u32> = (0..alpha.len() as u32).map(|i| i % n_groups).collect();
        let agg = aggregate_fusion_weights(&alpha, &groups).unwrap();
        for (g, mean) in &agg {
            prop_assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let members: Vec<&Vec<f64>> = alpha.iter().zip(&groups).filter(|(_, x)| *x == g).map(|(a, _)| a).collect();
            for v in 0..4 {
                let mut s = 0.0;
                for a in &members {
                    s += a[v];
                }
                prop_assert!((mean[v] - s / members.len() as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn field_means_match_loop(values in prop::collection::vec((0u32..6, 0.0f64..8.0, 0.0f64..8.0), 1..60)) {
        let ids: Vec<u32> = values.iter().map(|v| v.0).collect();
        let y: Vec<f64> = values.iter().map(|v| v.1).collect();
        let yhat: Vec<f64> = values.iter().map(|v| v.2).collect();
        for f in field_aggregate(&y, &yhat, &ids).unwrap() {
            let (mut k, mut sy, mut sp) = (0, 0.0, 0.0);
            for i in 0..ids.len() {
                if ids[i] == f.field_id {
                    k += 1;
                    sy += y[i];
                    sp += yhat[i];
                }
            }
            prop_assert_eq!(f.pixels, k);
            prop_assert!((f.y - sy / k as f64).abs() < 1e-12);
            prop_assert!((f.yhat - sp / k as f64).abs() < 1e-12);
        }
    }
}
