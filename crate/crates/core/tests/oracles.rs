//! Cross-checks against independent reference computations.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use sailprice::data::{build_design_matrix, FeatureMatrix, Region, RegionScheme, TargetVector, TECHNICAL_FEATURES};
use sailprice::ingest::{generate_synthetic, load_csv, write_csv, SyntheticSpec};
use sailprice::linear::{fit_gd, fit_ols, GdConfig};
use sailprice::analysis::fit_regional;
use sailprice::evaluation::ModelFamily;

fn design(x: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.n_rows(), x.n_cols() + 1, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] })
}

fn four_region(n: usize, seed: u64, noise: f64) -> Vec<sailprice::data::SailboatRecord> {
    let mut spec = SyntheticSpec::paper_like(n, seed);
    spec.region_effects.insert(Region::HongKong, 16_804.39);
    spec.noise_std = noise;
    generate_synthetic(&spec).unwrap()
}

#[test]
fn ols_matches_dense_least_squares() {
    let recs = four_region(300, 21, 20_000.0);
    let (x, y, _) =
        build_design_matrix(&recs, &TECHNICAL_FEATURES, Some(RegionScheme::FourRegionHK), true, false).unwrap();
    let a = design(&x);
    let b = DVector::from_vec(y.values.clone());
    let reference = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    let m = fit_ols(&x, &y).unwrap();
    assert_relative_eq!(m.intercept, reference[0], max_relative = 1e-7);
    for (j, c) in m.coefficients.iter().enumerate() {
        assert_relative_eq!(*c, reference[j + 1], max_relative = 1e-7);
    }
}

#[test]
fn gd_reaches_ridge_closed_form() {
    let recs = four_region(400, 22, 30_000.0);
    let (x, y, _) =
        build_design_matrix(&recs, &TECHNICAL_FEATURES[..7], None, false, true).unwrap();
    let lambda = 0.05;
    let n = x.n_rows() as f64;
    // stationarity of MSE + lambda |beta|² with an unpenalized intercept
    let a = design(&x);
    let mut lhs = a.transpose() * &a / n;
    for j in 1..lhs.ncols() {
        lhs[(j, j)] += lambda;
    }
    let rhs = a.transpose() * DVector::from_vec(y.values.clone()) / n;
    let reference = lhs.lu().solve(&rhs).unwrap();
    let config = GdConfig {
        l2_lambda: lambda,
        tol: 1e-15,
        max_iters: 200_000,
        ..GdConfig::default()
    };
    let (m, trace) = fit_gd(&x, &y, &config).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    assert_relative_eq!(m.intercept, reference[0], max_relative = 1e-6);
    for (j, c) in m.coefficients.iter().enumerate() {
        assert_relative_eq!(*c, reference[j + 1], max_relative = 1e-4);
    }
}

#[test]
fn regional_differences_do_not_depend_on_base() {
    let recs = four_region(500, 23, 10_000.0);
    let by_base: Vec<_> = Region::ALL
        .iter()
        .map(|&b| fit_regional(&recs, &ModelFamily::Ols, RegionScheme::FourRegionHK, b).unwrap())
        .collect();
    for fx in &by_base[1..] {
        for &r in &Region::ALL {
            let d0 = by_base[0].effect(r).unwrap() - by_base[0].effect(Region::Europe).unwrap();
            let d1 = fx.effect(r).unwrap() - fx.effect(Region::Europe).unwrap();
            assert_relative_eq!(d0, d1, epsilon = 1e-6);
        }
    }
    // predictions are identical whichever level is dropped
    let x0 = by_base[0].model.schema.extract(&recs).unwrap();
    let x2 = by_base[2].model.schema.extract(&recs).unwrap();
    let p0 = by_base[0].model.predict(&x0).unwrap();
    let p2 = by_base[2].model.predict(&x2).unwrap();
    for (a, b) in p0.values.iter().zip(&p2.values) {
        assert_relative_eq!(*a, *b, max_relative = 1e-10);
    }
}

#[test]
fn csv_round_trip_preserves_records() {
    let recs = four_region(50, 24, 1_000.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("listings.csv");
    write_csv(&recs, std::fs::File::create(&path).unwrap()).unwrap();
    let (back, report) = load_csv(&path).unwrap();
    assert_eq!(report.rows_out, 50);
    assert_eq!(back, recs);
    let again = dir.path().join("again.csv");
    write_csv(&back, std::fs::File::create(&again).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn ols_is_exact_on_noise_free_synthetic() {
    let recs = four_region(200, 25, 0.0);
    let (x, y, _) =
        build_design_matrix(&recs, &TECHNICAL_FEATURES, Some(RegionScheme::FourRegionHK), true, false).unwrap();
    let m = fit_ols(&x, &y).unwrap();
    let fitted: TargetVector = m.predict(&x).unwrap();
    let mean = y.values.iter().sum::<f64>() / y.len() as f64;
    let mse = sailprice::metrics::mse(&y.values, &fitted.values).unwrap();
    assert!(mse < 1e-12 * mean * mean, "{mse}");
}

#[test]
fn greedy_growth_can_miss_the_three_leaf_optimum() {
    use sailprice::tree::{fit_tree_dense, partition_sse, TreeConfig};
    // the best stump splits 0,2 | 3,5 and no second split recovers 0 | 2,3 | 5
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [0.0, 2.0, 3.0, 5.0];
    let config = TreeConfig { max_leaves: 3, max_depth: 4, min_samples_leaf: 1 };
    let tree = fit_tree_dense(&x, 1, &y, &config).unwrap();
    assert_relative_eq!(partition_sse(&tree, &x, 1, &y), 2.0, epsilon = 1e-12);
}
