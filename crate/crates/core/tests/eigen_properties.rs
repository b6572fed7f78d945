mod common;

use common::oracle;
use eigenbehavior::behavior::{binarize, CategoricalDayMatrix};
use eigenbehavior::eigen::{covariance, eigendecompose, mean_behavior, EigenModel};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn binary_matrix(max_days: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_days).prop_flat_map(move |d| {
        prop::collection::vec(prop::bool::ANY, d * cols)
            .prop_map(move |bits| DMatrix::from_fn(d, cols, |i, j| f64::from(u8::from(bits[i * cols + j]))))
    })
}

fn day_matrix(max_days: usize) -> impl Strategy<Value = CategoricalDayMatrix> {
    (2..=max_days).prop_flat_map(|d| {
        prop::collection::vec(prop::array::uniform24(0u8..4), d).prop_map(move |labels| CategoricalDayMatrix {
            building_id: "b".into(),
            day_dates: (0..d)
                .map(|i| chrono::NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + chrono::Duration::days(i as i64))
                .collect(),
            labels,
            categories: 4,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toy_matrices_match_the_reference_solvers(rows in binary_matrix(10, 6)) {
        let mu = mean_behavior(&rows);
        let c = covariance(&rows, &mu);
        let reference = to_rows(&rows);
        let mu_ref = oracle::mean(&reference);
        let c_ref = oracle::covariance(&reference);
        for j in 0..6 {
            prop_assert!((mu[j] - mu_ref[j]).abs() <= 1e-12);
            for k in 0..6 {
                prop_assert!((c[(j, k)] - c_ref[j][k]).abs() <= 1e-12);
            }
        }
        let eig = eigendecompose(&c).unwrap();
        let (values, vectors) = oracle::classical_jacobi(&c_ref);
        for j in 0..6 {
            prop_assert!((eig.values[j] - values[j]).abs() <= 1e-9);
            // vectors agree up to sign where the eigenvalue is simple
            let simple = (j == 0 || values[j - 1] - values[j] > 1e-6) && (j == 5 || values[j] - values[j + 1] > 1e-6);
            if simple {
                let dot: f64 = (0..6).map(|k| eig.vectors[(k, j)] * vectors[j][k]).sum();
                prop_assert!((dot.abs() - 1.0).abs() <= 1e-6);
            }
        }
        let sub2: Vec<Vec<f64>> = c_ref[..2].iter().map(|r| r[..2].to_vec()).collect();
        let sub3: Vec<Vec<f64>> = c_ref[..3].iter().map(|r| r[..3].to_vec()).collect();
        let e2 = eigendecompose(&DMatrix::from_fn(2, 2, |i, j| sub2[i][j])).unwrap();
        let e3 = eigendecompose(&DMatrix::from_fn(3, 3, |i, j| sub3[i][j])).unwrap();
        for (a, b) in e2.values.iter().zip(oracle::eigenvalues_2x2(&sub2)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        // acos near +-1 costs the closed form about sqrt(eps) on repeated roots
        for (a, b) in e3.values.iter().zip(oracle::eigenvalues_3x3(&sub3)) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn models_are_orthonormal_and_reconstruct_days(cat in day_matrix(40)) {
        let bin = binarize(&cat);
        let model = EigenModel::fit_behavior(&bin).unwrap();
        let v = &model.eigenvectors;
        let gram = v.transpose() * v;
        for j in 0..96 {
            for k in 0..96 {
                let target = if j == k { 1.0 } else { 0.0 };
                prop_assert!((gram[(j, k)] - target).abs() <= 1e-8);
            }
        }
        for i in 0..bin.days() {
            let row: Vec<f64> = bin.rows().row(i).iter().copied().collect();
            let w = model.weights(&row, 96);
            let mut back = model.mean.clone();
            for (j, wj) in w.iter().enumerate() {
                back += v.column(j) * *wj;
            }
            for (b, r) in back.iter().zip(&row) {
                prop_assert!((b - r).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rank_is_bounded_by_the_day_count(cat in day_matrix(30)) {
        let model = EigenModel::fit_behavior(&binarize(&cat)).unwrap();
        let nonzero = model.eigenvalues.iter().filter(|&&l| l > 0.0).count();
        // centring removes one dimension
        prop_assert!(nonzero < cat.days().min(96));
        prop_assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let curve = model.explained_curve().unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        if model.eigenvalues[0] > 0.0 {
            prop_assert!((curve[95] - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn day_order_does_not_change_the_spectrum(cat in day_matrix(20), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = cat.clone();
        let mut order: Vec<usize> = (0..cat.days()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        shuffled.labels = order.iter().map(|&i| cat.labels[i]).collect();
        shuffled.day_dates = order.iter().map(|&i| cat.day_dates[i]).collect();
        let a = EigenModel::fit_behavior(&binarize(&cat)).unwrap();
        let b = EigenModel::fit_behavior(&binarize(&shuffled)).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        for (x, y) in a.mean.iter().zip(b.mean.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn nalgebra_agrees_on_a_behavior_covariance() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let labels: Vec<[u8; 24]> = (0..50).map(|_| std::array::from_fn(|_| rng.random_range(0..4))).collect();
    let cat = CategoricalDayMatrix {
        building_id: "b".into(),
        day_dates: vec![chrono::NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(); 50],
        labels,
        categories: 4,
    };
    let bin = binarize(&cat);
    let mu = mean_behavior(bin.rows());
    let c = covariance(bin.rows(), &mu);
    let ours = eigendecompose(&c).unwrap();
    let mut theirs: Vec<f64> = c.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    theirs.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in ours.values.iter().zip(&theirs) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}
