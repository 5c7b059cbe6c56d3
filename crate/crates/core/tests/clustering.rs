use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traffic_llm::model::{PoIProfile, PoiMatrix, PoiRadius};
use traffic_llm::select::{featurize_poi, kmeans, summarize_region, BucketTable};

/// Adjusted Rand index from the contingency table.
fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let choose2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_rows: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_cols: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len() as u64);
    let max = (sum_rows + sum_cols) / 2.0;
    (index - expected) / (max - expected)
}

fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..80).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..300 {
        let c = i % 3;
        points.push(centers[c].iter().map(|v| v + rng.random_range(-0.5..0.5)).collect());
        labels.push(c);
    }
    (points, labels)
}

#[test]
fn adjusted_rand_oracle_sanity() {
    assert_eq!(adjusted_rand(&[0, 0, 1, 1], &[5, 5, 9, 9]), 1.0);
    assert!(adjusted_rand(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
}

#[test]
fn separated_blobs_are_recovered() {
    let (points, labels) = blobs(1);
    let r = kmeans(&points, 3, 42, 100, 1e-9).unwrap();
    assert_eq!(adjusted_rand(&r.assignments, &labels), 1.0);
    assert!(
        r.inertia_trace.windows(2).all(|w| w[1] <= w[0]),
        "{:?}",
        r.inertia_trace
    );
}

#[test]
fn k_equal_n_has_zero_inertia() {
    let (points, _) = blobs(2);
    let points = &points[..30];
    let r = kmeans(points, points.len(), 0, 100, 1e-9).unwrap();
    assert_eq!(r.inertia, 0.0);
}

#[test]
fn same_seed_same_clustering() {
    let (points, _) = blobs(3);
    assert_eq!(
        kmeans(&points, 4, 9, 100, 1e-9).unwrap(),
        kmeans(&points, 4, 9, 100, 1e-9).unwrap()
    );
}

fn profile(id: &str, counts: &[u32]) -> PoIProfile {
    let names: Vec<String> = (0..counts.len()).map(|i| format!("cat{i}")).collect();
    let matrix: PoiMatrix = std::array::from_fn(|d| counts.iter().map(|c| c + d as u32).collect());
    let by_radius = [PoiRadius::Km1, PoiRadius::Km3, PoiRadius::Km5]
        .into_iter()
        .map(|r| (r, matrix.clone()))
        .collect();
    PoIProfile::new(id, names, by_radius).unwrap()
}

proptest! {
    #[test]
    fn inertia_never_increases(
        points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 8..60),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let r = kmeans(&points, k, seed, 50, 0.0).unwrap();
        for w in r.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
        prop_assert!(r.assignments.iter().all(|&a| a < k));
        for c in 0..k {
            prop_assert!(r.assignments.contains(&c));
        }
    }

    #[test]
    fn featurization_ignores_input_order(rows in prop::collection::vec(prop::collection::vec(0u32..40, 5), 2..8)) {
        let profiles: Vec<PoIProfile> = rows.iter().enumerate().map(|(i, c)| profile(&format!("s{i}"), c)).collect();
        let mut reversed = profiles.clone();
        reversed.reverse();
        let mut a = featurize_poi(&profiles, 3).unwrap();
        let mut b = featurize_poi(&reversed, 3).unwrap();
        a.sort_by(|x, y| x.sensor_id.cmp(&y.sensor_id));
        b.sort_by(|x, y| x.sensor_id.cmp(&y.sensor_id));
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|v| v.features.len() == 12 && v.features.iter().all(|f| (0.0..=1.0).contains(f))));
    }

    #[test]
    fn region_labels_never_ascend(counts in prop::collection::vec(0u32..40, 5)) {
        let mut p = profile("s", &counts);
        p.category_names = vec!["school".into(), "hospital".into(), "bus_station".into(), "supermarket".into(), "cinema".into()];
        let attrs = summarize_region(&p, 0.01, &BucketTable::bundled()).unwrap();
        for w in attrs.entries.windows(2) {
            prop_assert!(w[0].share >= w[1].share);
        }
    }
}
