//! Sensor selection by PoI profile: featurization, k-means clustering,
//! representative picking and region attribute summaries.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_atomic, IoError};
use crate::model::{PoIProfile, PoiRadius, RegionAttributes, RegionBucket, RegionShare};

/// Default number of PoI categories kept per direction.
pub const DEFAULT_TOP_N: usize = 20;
pub const DEFAULT_SHARE_THRESHOLD: f64 = 0.15;

const BUNDLED_BUCKETS: &str = include_str!("../assets/data/poi_buckets.csv");

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no sensors to featurize")]
    NoSensors,
    #[error("profile {0} has a different category ordering")]
    CategoryMismatch(String),
    #[error("requested top {requested} categories but only {available} exist")]
    TooFewCategories { requested: usize, available: usize },
    #[error("k = {k} must be between 1 and the number of vectors ({n})")]
    InvalidK { k: usize, n: usize },
    #[error("vector {index} has a non-finite feature")]
    NonFinite { index: usize },
    #[error("vectors have inconsistent dimensions")]
    Dimension,
    #[error("share threshold {0} must be in (0, 1)")]
    Threshold(f64),
    #[error("bucket table line {line}: {message}")]
    BucketTable { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Maps PoI category names to region buckets. Unknown categories count as
/// [`RegionBucket::Other`].
#[derive(Debug, Clone, Default)]
pub struct BucketTable {
    map: HashMap<String, RegionBucket>,
}

impl BucketTable {
    pub fn bundled() -> BucketTable {
        Self::parse(BUNDLED_BUCKETS).expect("bundled bucket table is valid")
    }

    pub fn load(path: &Path) -> Result<BucketTable, SelectError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<BucketTable, SelectError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| SelectError::BucketTable {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["category", "bucket"] {
            return Err(SelectError::BucketTable {
                line: 1,
                message: "expected header category,bucket".into(),
            });
        }
        let mut map = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SelectError::BucketTable {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let bucket: RegionBucket =
                rec[1]
                    .parse()
                    .map_err(|e: crate::model::ValidationError| SelectError::BucketTable {
                        line,
                        message: e.to_string(),
                    })?;
            map.insert(rec[0].trim().to_ascii_lowercase(), bucket);
        }
        Ok(BucketTable { map })
    }

    pub fn bucket(&self, category: &str) -> RegionBucket {
        self.map
            .get(&category.trim().to_ascii_lowercase())
            .copied()
            .unwrap_or(RegionBucket::Other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoIFeatureVector {
    pub sensor_id: String,
    /// Direction-major: east, west, north, south blocks of `n` categories.
    pub features: Vec<f64>,
}

/// Builds `4n`-long feature vectors from 5 km PoI counts. The top `n`
/// categories are chosen by total count over all sensors, and each category
/// is divided by its maximum count over all sensors and directions.
pub fn featurize_poi(profiles: &[PoIProfile], n: usize) -> Result<Vec<PoIFeatureVector>, SelectError> {
    let first = profiles.first().ok_or(SelectError::NoSensors)?;
    let categories = &first.category_names;
    if let Some(p) = profiles.iter().find(|p| &p.category_names != categories) {
        return Err(SelectError::CategoryMismatch(p.sensor_id.clone()));
    }
    if n > categories.len() {
        return Err(SelectError::TooFewCategories {
            requested: n,
            available: categories.len(),
        });
    }
    let empty: [Vec<u32>; 4] = Default::default();
    let matrix = |p: &PoIProfile| p.at(PoiRadius::Km5).cloned();
    let count = |m: &Option<[Vec<u32>; 4]>, dir: usize, cat: usize| -> u64 {
        m.as_ref().unwrap_or(&empty)[dir].get(cat).copied().unwrap_or(0) as u64
    };
    let matrices: Vec<_> = profiles.iter().map(matrix).collect();

    let mut totals: Vec<(usize, u64)> = (0..categories.len())
        .map(|c| {
            let t = matrices
                .iter()
                .map(|m| (0..4).map(|d| count(m, d, c)).sum::<u64>())
                .sum();
            (c, t)
        })
        .collect();
    totals.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| categories[a.0].cmp(&categories[b.0])));
    let selected: Vec<usize> = totals.iter().take(n).map(|(c, _)| *c).collect();

    let max_per_cat: Vec<u64> = selected
        .iter()
        .map(|&c| {
            matrices
                .iter()
                .flat_map(|m| (0..4).map(move |d| (m, d)))
                .map(|(m, d)| count(m, d, c))
                .max()
                .unwrap_or(0)
        })
        .collect();

    Ok(profiles
        .iter()
        .zip(&matrices)
        .map(|(p, m)| {
            let mut features = Vec::with_capacity(4 * n);
            for d in 0..4 {
                for (slot, &c) in selected.iter().enumerate() {
                    let max = max_per_cat[slot];
                    features.push(if max == 0 {
                        0.0
                    } else {
                        count(m, d, c) as f64 / max as f64
                    });
                }
            }
            PoIFeatureVector {
                sensor_id: p.sensor_id.clone(),
                features,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index per input vector, aligned with the input order.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, ending with the final one.
    pub inertia_trace: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// `sensor_id -> cluster` for the vectors the result was fitted on.
    pub fn assignment_map(&self, vectors: &[PoIFeatureVector]) -> std::collections::BTreeMap<String, usize> {
        vectors
            .iter()
            .zip(&self.assignments)
            .map(|(v, &c)| (v.sensor_id.clone(), c))
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>], assignments: &mut [usize]) {
    for (p, slot) in points.iter().zip(assignments.iter_mut()) {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        *slot = best.0;
    }
}

/// Moves the farthest point of a multi-member cluster into each empty one.
fn repair_empty(points: &[&[f64]], centroids: &mut [Vec<f64>], assignments: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| (i, sq_dist(points[i], &centroids[assignments[i]])))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else { return };
        centroids[empty] = points[i].to_vec();
        assignments[i] = empty;
    }
}

fn inertia(points: &[&[f64]], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn update(points: &[&[f64]], assignments: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((s, c), prev)| {
            if c == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|x| x / c as f64).collect()
            }
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when no centroid moves by `tol` or more (Euclidean), or after
/// `max_iters` update rounds. Deterministic for a given `seed`.
pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterResult, SelectError> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(SelectError::InvalidK { k, n });
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(SelectError::Dimension);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SelectError::NonFinite { index: i });
        }
    }
    let points: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(&points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for iter in 1..=max_iters.max(1) {
        assign(&points, &centroids, &mut assignments);
        repair_empty(&points, &mut centroids, &mut assignments);
        trace.push(inertia(&points, &centroids, &assignments));
        let next = update(&points, &assignments, &centroids);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations = iter;
        if shift < tol {
            break;
        }
    }
    assign(&points, &centroids, &mut assignments);
    repair_empty(&points, &mut centroids, &mut assignments);
    let final_inertia = inertia(&points, &centroids, &assignments);
    trace.push(final_inertia);

    Ok(ClusterResult {
        assignments,
        centroids,
        inertia: final_inertia,
        iterations,
        inertia_trace: trace,
    })
}

/// Per cluster, the sensor nearest its centroid (ties go to the smallest id).
pub fn select_representatives(result: &ClusterResult, vectors: &[PoIFeatureVector]) -> Vec<String> {
    let mut best: Vec<Option<(f64, &str)>> = vec![None; result.k()];
    for (v, &c) in vectors.iter().zip(&result.assignments) {
        let d = sq_dist(&v.features, &result.centroids[c]);
        let better = match best[c] {
            None => true,
            Some((bd, id)) => d < bd || (d == bd && v.sensor_id.as_str() < id),
        };
        if better {
            best[c] = Some((d, &v.sensor_id));
        }
    }
    best.into_iter().flatten().map(|(_, id)| id.to_string()).collect()
}

/// Summarizes a PoI profile at 5 km into region attribute labels. Buckets
/// with at least `threshold` of the total are listed by descending share;
/// when none qualifies the largest bucket alone is listed.
pub fn summarize_region(
    profile: &PoIProfile,
    threshold: f64,
    table: &BucketTable,
) -> Result<RegionAttributes, SelectError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SelectError::Threshold(threshold));
    }
    let mut totals = [0u64; 7];
    if let Some(m) = profile.at(PoiRadius::Km5) {
        for (c, name) in profile.category_names.iter().enumerate() {
            let bucket = table.bucket(name);
            let idx = RegionBucket::ALL
                .iter()
                .position(|b| *b == bucket)
                .expect("bucket listed");
            totals[idx] += m.iter().map(|row| row.get(c).copied().unwrap_or(0) as u64).sum::<u64>();
        }
    }
    let total: u64 = totals.iter().sum();
    if total == 0 {
        return Ok(RegionAttributes {
            entries: vec![RegionShare {
                label: RegionBucket::Other,
                share: 0.0,
            }],
        });
    }
    let mut shares: Vec<RegionShare> = RegionBucket::ALL
        .iter()
        .zip(totals)
        .filter(|(_, t)| *t > 0)
        .map(|(&label, t)| RegionShare {
            label,
            share: t as f64 / total as f64,
        })
        .collect();
    // stable sort keeps bucket order among equal shares
    shares.sort_by(|a, b| b.share.total_cmp(&a.share));
    let passing: Vec<RegionShare> = shares.iter().copied().filter(|s| s.share >= threshold).collect();
    let entries = if passing.is_empty() { vec![shares[0]] } else { passing };
    Ok(RegionAttributes { entries })
}

/// `sensor_id,cluster,representative`
pub fn write_clusters_csv(
    path: &Path,
    vectors: &[PoIFeatureVector],
    result: &ClusterResult,
    representatives: &[String],
) -> Result<(), SelectError> {
    write_atomic(path, |w| {
        writeln!(w, "sensor_id,cluster,representative")?;
        for (v, c) in vectors.iter().zip(&result.assignments) {
            let rep = representatives.iter().any(|r| r == &v.sensor_id);
            writeln!(w, "{},{},{}", v.sensor_id, c, rep)?;
        }
        Ok(())
    })?;
    Ok(())
}
