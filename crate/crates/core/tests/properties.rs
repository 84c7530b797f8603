use proptest::prelude::*;
use sailprice::boosting::{fit_boosted, BoostConfig};
use sailprice::data::{FeatureMatrix, FeatureSchema, StandardizationParams, TargetVector};
use sailprice::evaluation::make_split;
use sailprice::linear::fit_ols;
use sailprice::metrics::{mae, mse};
use sailprice::tree::{fit_tree_dense, partition_sse, sse, TreeConfig};

fn matrix(cols: &[&str], rows: &[Vec<f64>]) -> FeatureMatrix {
    let schema = FeatureSchema::from_selection(cols, None, false).unwrap();
    FeatureMatrix::from_rows(schema, rows, (0..rows.len()).map(|i| i.to_string()).collect()).unwrap()
}

/// Best SSE over all trees with at most two leaves.
fn best_stump_sse(data: &[f64], p: usize, t: &[f64]) -> f64 {
    let mut best = sse(t);
    for f in 0..p {
        for i in 0..t.len() {
            let cut = data[i * p + f];
            let (l, r): (Vec<f64>, Vec<f64>) = (0..t.len())
                .map(|k| (data[k * p + f] <= cut, t[k]))
                .fold((vec![], vec![]), |(mut l, mut r), (left, v)| {
                    if left {
                        l.push(v)
                    } else {
                        r.push(v)
                    }
                    (l, r)
                });
            best = best.min(sse(&l) + sse(&r));
        }
    }
    best
}

proptest! {
    #[test]
    fn mae_bounded_by_rmse(pairs in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..60)) {
        let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(mae(&a, &p).unwrap() <= mse(&a, &p).unwrap().sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn stumps_are_optimal(
        rows in prop::collection::vec((0u8..6, 0u8..6, 0u8..10), 1..9),
    ) {
        let data: Vec<f64> = rows.iter().flat_map(|r| [r.0 as f64, r.1 as f64]).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
        let config = TreeConfig { max_leaves: 2, max_depth: 4, min_samples_leaf: 1 };
        let tree = fit_tree_dense(&data, 2, &t, &config).unwrap();
        let got = partition_sse(&tree, &data, 2, &t);
        prop_assert!((got - best_stump_sse(&data, 2, &t)).abs() < 1e-9);
    }

    #[test]
    fn more_leaves_never_hurt(
        rows in prop::collection::vec((0u8..20, 0u8..20, 0u8..50), 10..40),
    ) {
        let data: Vec<f64> = rows.iter().flat_map(|r| [r.0 as f64, r.1 as f64]).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
        let mut last = f64::INFINITY;
        for k in 1..6 {
            let config = TreeConfig { max_leaves: k, max_depth: 6, min_samples_leaf: 1 };
            let tree = fit_tree_dense(&data, 2, &t, &config).unwrap();
            prop_assert!(tree.n_leaves() <= k);
            let s = partition_sse(&tree, &data, 2, &t);
            prop_assert!(s <= last + 1e-9);
            last = s;
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_columns(
        rows in prop::collection::vec((-50f64..50.0, -50f64..50.0, -1e4f64..1e4), 6..40),
    ) {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let x = matrix(&["length_ft", "beam_ft"], &xs);
        let y = TargetVector::new(rows.iter().map(|r| r.2).collect()).unwrap();
        let Ok(m) = fit_ols(&x, &y) else { return Ok(()); };
        let fitted = m.predict(&x).unwrap();
        let r: Vec<f64> = y.values.iter().zip(&fitted.values).map(|(a, b)| a - b).collect();
        let scale = y.values.iter().map(|v| v.abs()).fold(1.0, f64::max) * 100.0 * r.len() as f64;
        prop_assert!(r.iter().sum::<f64>().abs() < 1e-8 * scale);
        for j in 0..2 {
            let dot: f64 = x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() < 1e-8 * scale * 50.0);
        }
    }

    #[test]
    fn standardization_round_trips(
        rows in prop::collection::vec((1f64..80.0, 1f64..30.0), 2..30),
    ) {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let x = matrix(&["length_ft", "beam_ft"], &xs);
        let Ok(p) = StandardizationParams::estimate(&x) else { return Ok(()); };
        let back = x.standardized_with(&p).unwrap().to_raw().unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn boosting_trace_non_increasing(
        rows in prop::collection::vec((0f64..10.0, 0f64..10.0, -100f64..100.0), 12..60),
        alpha in 0.05f64..1.0,
        lambda in prop_oneof![Just(0.0), 0.0f64..0.5],
    ) {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let x = matrix(&["length_ft", "beam_ft"], &xs);
        let y = TargetVector::new(rows.iter().map(|r| r.2).collect()).unwrap();
        let config = BoostConfig { n_iters: 40, learning_rate: alpha, l2_lambda: lambda, ..BoostConfig::default() };
        let (_, trace) = fit_boosted(&x, &y, &config).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
    }

    #[test]
    fn split_halves_partition_ids(n in 2usize..200, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let plan = make_split(&ids, seed).unwrap();
        prop_assert_eq!(plan.half_a_ids.len(), n.div_ceil(2));
        let mut all: Vec<String> = plan.half_a_ids.iter().chain(&plan.half_b_ids).cloned().collect();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        prop_assert_eq!(all, expected);
    }
}
