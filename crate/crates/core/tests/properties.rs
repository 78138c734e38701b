//! Randomized invariants for the data, selection, metric and persistence code.

use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2};
use nrbm::data::{parse_dense_csv, write_dense_csv};
use nrbm::persistence::{model_from_json, model_to_json};
use nrbm::stability::conjugate;
use nrbm::{
    consistency_index, jaccard_index, make_batches, mann_whitney_auc, select_top, CsvOptions, DataMatrix, LassoModel,
    Model, RbmParams, TrainConfig,
};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(0.0f64..=1.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..12, 1usize..8).prop_flat_map(|(r, c)| matrix(r, c))
}

fn real_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn real_vector(len: usize) -> impl Strategy<Value = Array1<f64>> {
    proptest::collection::vec(-5.0f64..5.0, len).prop_map(Array1::from)
}

/// `count` subsets of size `t` from `0..total`.
fn subsets(total: usize, t: usize, count: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec(Just((0..total).collect::<Vec<_>>()).prop_shuffle(), count)
        .prop_map(move |perms| perms.into_iter().map(|p| p[..t].to_vec()).collect())
}

fn family() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (3usize..20)
        .prop_flat_map(|total| (Just(total), 1..total, 2usize..6))
        .prop_flat_map(|(total, t, n)| (Just(total), subsets(total, t, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_lossless(values in sized_matrix(), with_labels in any::<bool>()) {
        let labels: Option<Vec<u32>> = with_labels.then(|| (0..values.nrows() as u32).map(|i| i % 3).collect());
        let mut buf = Vec::new();
        write_dense_csv(values.view(), labels.as_deref(), None, &mut buf).unwrap();
        let opts = CsvOptions { has_label_col: with_labels, ..CsvOptions::default() };
        let back: DataMatrix<f64> = parse_dense_csv(buf.as_slice(), &opts).unwrap();
        prop_assert_eq!(back.values(), values.view());
        prop_assert_eq!(back.labels(), labels.as_deref());
    }

    #[test]
    fn batches_partition_the_rows(rows in 1usize..300, batch in 1usize..64, seed in any::<u64>(), epoch in 0u64..50) {
        let plan = make_batches(rows, batch, seed, epoch).unwrap();
        let mut seen: Vec<usize> = plan.batches().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..rows).collect::<Vec<_>>());
        let sizes = plan.batch_sizes();
        prop_assert!(sizes[..sizes.len() - 1].iter().all(|&s| s == batch.min(rows)));
        prop_assert_eq!(make_batches(rows, batch, seed, epoch).unwrap(), plan);
    }

    #[test]
    fn stability_indices_are_bounded_and_order_free((total, family) in family(), rot in 0usize..6) {
        let c = consistency_index(&family, total).unwrap();
        let j = jaccard_index(&family).unwrap();
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&c), "consistency {}", c);
        prop_assert!((0.0..=1.0).contains(&j), "jaccard {}", j);

        let mut rotated = family.clone();
        rotated.rotate_left(rot % family.len());
        for s in rotated.iter_mut() {
            s.reverse();
        }
        assert_abs_diff_eq!(consistency_index(&rotated, total).unwrap(), c, epsilon = 1e-12);
        assert_abs_diff_eq!(jaccard_index(&rotated).unwrap(), j, epsilon = 1e-12);

        // Relabelling features by a fixed permutation changes nothing.
        let shift = rot % total;
        let relabelled: Vec<Vec<usize>> = family
            .iter()
            .map(|s| s.iter().map(|&i| (i + shift) % total).collect())
            .collect();
        assert_abs_diff_eq!(consistency_index(&relabelled, total).unwrap(), c, epsilon = 1e-12);
        assert_abs_diff_eq!(jaccard_index(&relabelled).unwrap(), j, epsilon = 1e-12);
    }

    #[test]
    fn identical_subsets_are_perfectly_stable(total in 3usize..30, seed in any::<u64>()) {
        let t = 1 + (seed as usize) % (total - 1);
        let s: Vec<usize> = (0..t).collect();
        let family = vec![s.clone(), s.clone(), s];
        assert_abs_diff_eq!(consistency_index(&family, total).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jaccard_index(&family).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugation_is_linear(
        (w, x, y) in (1usize..10, 1usize..6).prop_flat_map(|(n, k)| (real_matrix(n, k), real_vector(k), real_vector(k))),
        s in -3.0f64..3.0,
    ) {
        let combined = conjugate(w.view(), (&x * s + &y).view()).unwrap();
        let separate = conjugate(w.view(), x.view()).unwrap() * s + conjugate(w.view(), y.view()).unwrap();
        for (a, b) in combined.iter().zip(separate.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn top_selection_ignores_sign_and_positive_scale(v in real_vector(15), t in 0usize..=15, s in 0.1f64..10.0) {
        let base = select_top(v.view(), t, 0).unwrap();
        prop_assert_eq!(base.size(), t);
        prop_assert!(base.indices.windows(2).all(|p| p[0] < p[1]));
        prop_assert_eq!(&select_top((&v * -s).view(), t, 0).unwrap().indices, &base.indices);
        // Every selected magnitude dominates every rejected one.
        let chosen_min = base.indices.iter().map(|&i| v[i].abs()).fold(f64::INFINITY, f64::min);
        let rest_max = (0..v.len()).filter(|i| !base.indices.contains(i)).map(|i| v[i].abs()).fold(0.0, f64::max);
        prop_assert!(t == 0 || t == v.len() || chosen_min >= rest_max);
    }

    #[test]
    fn auc_matches_pair_counting(
        pairs in proptest::collection::vec((0u8..6, any::<bool>()), 2..60)
            .prop_filter("both classes", |p| p.iter().any(|x| x.1) && p.iter().any(|x| !x.1)),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 5.0).collect();
        let labels: Vec<u32> = pairs.iter().map(|p| u32::from(p.1)).collect();
        let mut wins = 0.0;
        let mut total = 0.0;
        for (sp, _) in scores.iter().zip(&labels).filter(|x| *x.1 == 1) {
            for (sn, _) in scores.iter().zip(&labels).filter(|x| *x.1 == 0) {
                total += 1.0;
                wins += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
            }
        }
        let est = mann_whitney_auc(&scores, &labels).unwrap();
        assert_abs_diff_eq!(est.auc, wins / total, epsilon = 1e-12);
        prop_assert!(est.ci_low <= est.auc && est.auc <= est.ci_high);
    }

    #[test]
    fn model_json_round_trip_is_exact(
        (a, b, w) in (1usize..8, 1usize..6).prop_flat_map(|(n, k)| (real_vector(n), real_vector(k), real_matrix(n, k))),
        bias in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let k = b.len();
        let rbm = RbmParams::new(a, b, w).unwrap();
        let lasso = LassoModel { weights: Array1::linspace(-1.0, 1.0, k), bias, beta: 0.01, converged: true, iterations: 7 };
        let model: Model = Model::pipeline(rbm, lasso, TrainConfig { seed, ..TrainConfig::default() });
        let back: Model = model_from_json(&model_to_json(&model).unwrap()).unwrap();
        let (x, y) = (model.rbm.as_ref().unwrap(), back.rbm.as_ref().unwrap());
        prop_assert_eq!(x.weights(), y.weights());
        prop_assert_eq!(x.visible_bias(), y.visible_bias());
        prop_assert_eq!(x.hidden_bias(), y.hidden_bias());
        prop_assert_eq!(&model.lasso, &back.lasso);
        prop_assert_eq!(back.master_seed, model.master_seed);
    }
}
