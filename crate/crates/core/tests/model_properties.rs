//! Property tests for trees, ensembles, the LSTM and metrics.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wildfire_core::cart::{fit_tree, FeatureSubsample, RegressionTree, SplitCriterion, Targets, TreeNode, TreeParams};
use wildfire_core::eval::{compute_metrics, grid_search, kfold_indices, Grid, ModelParams, ParamValue};
use wildfire_core::forest::{fit_forest, impurity_importance, predict_forest, ForestParams};
use wildfire_core::gbt::{fit_gbt, predict_gbt, GbtParams};
use wildfire_core::lstm::{lstm_backward, lstm_forward, predict_lstm, LstmShape, LstmWeights};
use wildfire_core::matrix::Matrix;

fn dataset(max_rows: usize, max_features: usize) -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    (2..=max_rows, 1..=max_features).prop_flat_map(|(n, p)| {
        (proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, p), n), proptest::collection::vec(-5.0f64..5.0, n))
            .prop_map(|(rows, y)| (Matrix::from_rows(&rows), y))
    })
}

fn grow(x: &Matrix, y: &[f64], depth: Option<usize>) -> RegressionTree {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let features: Vec<usize> = (0..x.n_cols()).collect();
    let params = TreeParams { max_depth: depth, ..TreeParams::default() };
    fit_tree(x, &rows, Targets::Values(y), &features, &params, SplitCriterion::Variance, &mut ChaCha8Rng::seed_from_u64(0))
}

fn sse(tree: &RegressionTree, x: &Matrix, y: &[f64]) -> f64 {
    (0..x.n_rows()).map(|i| (tree.predict_unchecked(x.row(i)) - y[i]).powi(2)).sum()
}

fn lstm_weights(seed: u64) -> LstmWeights {
    use rand::Rng;
    let shape = LstmShape::new(2, &[4, 3], 5, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = LstmWeights::zeros(shape);
    for v in &mut w.params {
        *v = rng.gen_range(-0.6..0.6);
    }
    w
}

fn lstm_rows(seed: u64, n: usize, max_code: [usize; 2]) -> Matrix {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0..max_code[0]) as f64, rng.gen_range(0..max_code[1]) as f64])
        .collect();
    Matrix::from_rows(&rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_partitions_its_rows((x, y) in dataset(40, 4), depth in proptest::option::of(0usize..5)) {
        let tree = grow(&x, &y, depth);
        let leaves: usize = tree.nodes.iter().filter_map(|n| match n { TreeNode::Leaf { n_samples, .. } => Some(*n_samples), _ => None }).sum();
        prop_assert_eq!(leaves, x.n_rows());
        for node in &tree.nodes {
            if let TreeNode::Internal { gain, n_samples, left, right, .. } = node {
                prop_assert!(*gain > 0.0);
                prop_assert_eq!(tree.nodes[*left].n_samples() + tree.nodes[*right].n_samples(), *n_samples);
            }
        }
        let mut counts = vec![0usize; tree.nodes.len()];
        for i in 0..x.n_rows() {
            let leaf = tree.leaf_index(x.row(i));
            let is_leaf = matches!(tree.nodes[leaf], TreeNode::Leaf { .. });
            prop_assert!(is_leaf);
            counts[leaf] += 1;
        }
        for (id, node) in tree.nodes.iter().enumerate() {
            if let TreeNode::Leaf { n_samples, .. } = node {
                prop_assert_eq!(counts[id], *n_samples);
            }
        }
        if let Some(d) = depth {
            prop_assert!(tree.depth() <= d);
        }
    }

    #[test]
    fn monotone_feature_transform_keeps_leaf_assignment((x, y) in dataset(40, 3), col in 0usize..3) {
        let col = col % x.n_cols();
        let mut warped = x.clone();
        for i in 0..x.n_rows() {
            warped.set(i, col, (x.get(i, col) / 4.0).exp() * 3.0 + 7.0);
        }
        let a = grow(&x, &y, Some(4));
        let b = grow(&warped, &y, Some(4));
        for i in 0..x.n_rows() {
            prop_assert_eq!(a.leaf_index(x.row(i)), b.leaf_index(warped.row(i)));
        }
    }

    #[test]
    fn deeper_trees_fit_no_worse((x, y) in dataset(40, 4)) {
        let mut prev = f64::INFINITY;
        for d in 0..6 {
            let e = sse(&grow(&x, &y, Some(d)), &x, &y);
            prop_assert!(e <= prev * (1.0 + 1e-12) + 1e-12, "depth {}: {} > {}", d, e, prev);
            prev = e;
        }
    }

    #[test]
    fn forest_without_randomness_is_one_tree((x, y) in dataset(30, 3), k in 1usize..5) {
        let params = ForestParams { n_estimators: k, max_depth: Some(4), bootstrap: false, max_features: FeatureSubsample::All, ..ForestParams::default() };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let single = grow(&x, &y, Some(4));
        for t in &forest.trees {
            prop_assert_eq!(t, &single);
        }
        for i in 0..x.n_rows() {
            prop_assert!((forest.predict_row(x.row(i)).unwrap() - single.predict_unchecked(x.row(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn importances_are_a_distribution((x, y) in dataset(40, 5), seed in 0u64..1000) {
        let forest = fit_forest(&x, &y, &ForestParams { n_estimators: 8, seed, ..ForestParams::default() }).unwrap();
        let imp = impurity_importance(&forest);
        prop_assert!(imp.iter().all(|v| *v >= 0.0));
        let any_split = forest.trees.iter().any(|t| t.nodes.len() > 1);
        let total: f64 = imp.iter().sum();
        if any_split {
            prop_assert!((total - 1.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn huge_lambda_pins_predictions_to_base_score((x, y) in dataset(40, 3)) {
        let params = GbtParams { n_estimators: 20, learning_rate: 0.3, lambda: 1e9, gamma: 0.0, ..GbtParams::default() };
        let model = fit_gbt(&x, &y, &params, None).unwrap();
        for p in predict_gbt(&model, &x).unwrap() {
            prop_assert!((p - model.base_score).abs() < 1e-3);
        }
    }

    #[test]
    fn early_stopping_keeps_the_best_prefix((x, y) in dataset(40, 3), (vx, vy) in dataset(15, 3), rounds in 1usize..6) {
        prop_assume!(x.n_cols() == vx.n_cols());
        let params = GbtParams { n_estimators: 60, learning_rate: 0.3, early_stopping_rounds: Some(rounds), subsample: 1.0, ..GbtParams::default() };
        let model = fit_gbt(&x, &y, &params, Some((&vx, &vy))).unwrap();
        let best = model.validation_curve.iter().copied().fold(f64::INFINITY, f64::min);
        let pred = predict_gbt(&model, &vx).unwrap();
        let rmse = (pred.iter().zip(&vy).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / vy.len() as f64).sqrt();
        prop_assert!(rmse <= best + 1e-12, "kept {} vs best {}", rmse, best);
    }

    #[test]
    fn lstm_batches_match_single_rows(seed in 0u64..500, n in 1usize..12) {
        let w = lstm_weights(seed);
        let x = lstm_rows(seed + 1, n, [4, 3]);
        let batch = predict_lstm(&w, &x).unwrap();
        for i in 0..n {
            let one = predict_lstm(&w, &x.select_rows(&[i])).unwrap();
            prop_assert!((one[0] - batch[i]).abs() < 1e-9);
        }
        prop_assert_eq!(predict_lstm(&w, &x).unwrap(), batch);
    }

    #[test]
    fn absent_codes_get_zero_embedding_gradient(seed in 0u64..500, n in 1usize..10) {
        let w = lstm_weights(seed);
        // Codes 0..2 only, so row 2 and 3 of the first table (and row 2 of
        // the second) are never looked up.
        let x = lstm_rows(seed + 7, n, [2, 2]);
        let caches: Vec<_> = x.rows().map(|r| lstm_forward(&w, r, None).unwrap().1).collect();
        let y = vec![0.5; n];
        let grad = lstm_backward(&w, &caches, &y).unwrap();
        let dims = &w.shape.embedding_dims;
        let e0 = grad.tensor("E_0").unwrap().values;
        let e1 = grad.tensor("E_1").unwrap().values;
        prop_assert!(e0[2 * dims[0]..].iter().all(|v| *v == 0.0));
        prop_assert!(e1[2 * dims[1]..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mae_never_exceeds_rmse(pairs in proptest::collection::vec((0.0f64..500.0, 0.0f64..500.0), 2..200)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&t, &p).unwrap();
        prop_assert!(m.mae_days <= m.rmse_days * (1.0 + 1e-12));
    }
}

#[test]
fn forest_is_identical_across_thread_counts() {
    let (x, y) = wildfire_core::synth::single_signal(200, 6, 2, 11);
    let params = ForestParams { n_estimators: 24, ..ForestParams::default() };
    let fit_with = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit_forest(&x, &y, &params).unwrap())
    };
    let one = fit_with(1);
    let many = fit_with(4);
    assert_eq!(one, many);
    assert_eq!(predict_forest(&one, &x).unwrap(), predict_forest(&many, &x).unwrap());
}

#[test]
fn gbt_is_identical_across_thread_counts() {
    let (x, y) = wildfire_core::synth::single_signal(200, 6, 4, 12);
    let params = GbtParams { n_estimators: 40, ..GbtParams::default() };
    let fit_with = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit_gbt(&x, &y, &params, None).unwrap())
    };
    assert_eq!(fit_with(1), fit_with(4));
}

#[test]
fn grid_search_fits_every_fold_of_every_combination() {
    let (x, y) = wildfire_core::synth::single_signal(60, 3, 0, 13);
    let grid = Grid::new(vec![
        ("max_depth", vec![ParamValue::Int(1), ParamValue::Int(3), ParamValue::Text("none".into())]),
        ("min_samples_leaf", vec![ParamValue::Int(1), ParamValue::Int(2)]),
    ]);
    let base = ModelParams::Rf(ForestParams { n_estimators: 5, ..ForestParams::default() });
    let plan = kfold_indices(60, 5, 1).unwrap();
    let r = grid_search(&base, &grid, &x, &y, &plan).unwrap();
    assert_eq!(r.fits, 6 * 5);
    assert_eq!(r.scores.len(), 6);
    assert_eq!(r.to_csv().lines().count(), 7);
}
