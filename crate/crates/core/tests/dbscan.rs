mod common;

use chainwatch_core::spm::{dbscan, Label};
use common::{canonical, random_points, reference_dbscan};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_matches_reference(seed in any::<u64>()) {
        let (points, eps, min_pts) = random_points(seed, 300);
        prop_assert_eq!(canonical(&dbscan(&points, eps, min_pts)), canonical(&reference_dbscan(&points, eps, min_pts)));
    }

    #[test]
    fn clusters_have_a_core(seed in any::<u64>()) {
        let (points, eps, min_pts) = random_points(seed, 200);
        let labels = dbscan(&points, eps, min_pts);
        let within = |i: usize| points.iter().filter(|q| {
            q.iter().zip(&points[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= eps
        }).count();
        let clusters: std::collections::BTreeSet<usize> =
            labels.iter().filter_map(|l| match l { Label::Cluster(c) => Some(*c), Label::Noise => None }).collect();
        for c in clusters {
            let has_core = (0..points.len()).any(|i| labels[i] == Label::Cluster(c) && within(i) >= min_pts);
            prop_assert!(has_core);
        }
        for (i, l) in labels.iter().enumerate() {
            if *l == Label::Noise {
                prop_assert!(within(i) < min_pts);
            }
        }
    }
}

#[test]
fn min_pts_one_makes_every_point_a_cluster_member() {
    let (points, eps, _) = random_points(3, 50);
    assert!(dbscan(&points, eps, 1).iter().all(|l| matches!(l, Label::Cluster(_))));
}
