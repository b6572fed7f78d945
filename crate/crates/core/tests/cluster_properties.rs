use eigenbehavior::cluster::{assign, inertia, kmeans_fit, KMeansConfig};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 8usize..60).prop_flat_map(|(dim, n)| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, dim), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lloyd_never_increases_inertia(points in dataset(), k in 1usize..6, seed in any::<u64>()) {
        let cfg = KMeansConfig { k, restarts: 3, seed, ..Default::default() };
        let model = kmeans_fit(&points, &cfg).unwrap();
        prop_assert!(model.inertia_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert_eq!(assign(&points, &model.centroids), model.labels.clone());
        let recomputed = inertia(&points, &model.centroids, &model.labels);
        prop_assert!((recomputed - model.inertia).abs() <= 1e-9 * recomputed.max(1.0));
        let mut used = model.labels.clone();
        used.sort();
        used.dedup();
        prop_assert_eq!(used.len(), k.min(points.len()));
    }

    #[test]
    fn one_cluster_is_the_mean(points in dataset()) {
        let model = kmeans_fit(&points, &KMeansConfig { k: 1, ..Default::default() }).unwrap();
        let n = points.len() as f64;
        for j in 0..points[0].len() {
            let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
            prop_assert!((model.centroids[0][j] - mean).abs() <= 1e-9);
        }
    }
}
