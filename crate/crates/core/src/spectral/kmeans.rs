//! Lloyd k-means with k-means++ seeding on row-normalized embeddings.

use std::collections::HashSet;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Assignment, SpectralError};

const MAX_LLOYD_ITERS: usize = 300;

/// Scales every row to unit length; zero rows stay zero.
pub fn normalize_rows(u: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = u.to_owned();
    for i in 0..out.nrows() {
        let norm = (0..out.ncols()).map(|j| out[(i, j)] * out[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..out.ncols() {
                out[(i, j)] /= norm;
            }
        }
    }
    out
}

/// Number of bitwise-distinct rows.
pub fn count_distinct_rows(u: MatRef<'_, f64>) -> usize {
    let mut seen = HashSet::new();
    for i in 0..u.nrows() {
        let key: Vec<u64> = (0..u.ncols()).map(|j| (u[(i, j)] + 0.0).to_bits()).collect();
        seen.insert(key);
    }
    seen.len()
}

/// One seeded k-means run.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    /// Zero-based cluster index per row.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seed(rows: &[Vec<f64>], m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can walk past the end; fall back to the farthest row.
            if d2[chosen] == 0.0 {
                chosen = (0..n).max_by(|&a, &b| d2[a].total_cmp(&d2[b])).unwrap_or(0);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn recompute_centroids(rows: &[Vec<f64>], labels: &[usize], m: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = rows[0].len();
    let mut sums = vec![vec![0.0; d]; m];
    let mut counts = vec![0usize; m];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    (sums, counts)
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>], counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
        if counts[largest] < 2 {
            return;
        }
        let far = (0..rows.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(&rows[a], &centroids[largest])
                    .total_cmp(&sq_dist(&rows[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        labels[far] = empty;
        counts[largest] -= 1;
        counts[empty] = 1;
        centroids[empty] = rows[far].clone();
        let (c, _) = recompute_centroids(rows, labels, counts.len());
        centroids[largest] = c[largest].clone();
    }
}

/// A single k-means++ / Lloyd run on the given rows (not re-normalized).
pub fn kmeans_run(data: MatRef<'_, f64>, m: usize, rng: &mut ChaCha8Rng) -> KMeansRun {
    let rows: Vec<Vec<f64>> = (0..data.nrows())
        .map(|i| (0..data.ncols()).map(|j| data[(i, j)]).collect())
        .collect();
    let mut centroids = plus_plus_seed(&rows, m, rng);
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let (c, mut counts) = recompute_centroids(&rows, &labels, m);
        centroids = c;
        repair_empty(&rows, &mut labels, &mut centroids, &mut counts);
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let (c, mut counts) = recompute_centroids(&rows, &labels, m);
    centroids = c;
    repair_empty(&rows, &mut labels, &mut centroids, &mut counts);
    let inertia = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| sq_dist(r, &centroids[l]))
        .sum();
    KMeansRun {
        labels,
        centroids,
        inertia,
    }
}

/// RNG for restart `r` of a k-means call seeded with `seed`.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Row-normalizes `u` and keeps the best of `restarts` k-means++ runs by
/// within-cluster sum of squares (earliest run wins ties). Rows are visited in
/// lexicographic order, so the partition does not depend on point order.
pub fn cluster_kmeans(u: MatRef<'_, f64>, m: usize, restarts: usize, seed: u64) -> Result<Assignment, SpectralError> {
    let n = u.nrows();
    if m == 0 || m > n {
        return Err(SpectralError::BadDimension { m, n });
    }
    if m == 1 {
        return Assignment::new(vec![1; n], 1);
    }
    let data = normalize_rows(u);
    let distinct = count_distinct_rows(data.as_ref());
    if m > distinct {
        return Err(SpectralError::TooFewDistinctRows { m, distinct });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (0..data.ncols())
            .map(|j| data[(a, j)].total_cmp(&data[(b, j)]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = Mat::from_fn(n, data.ncols(), |i, j| data[(order[i], j)]);
    let mut best: Option<KMeansRun> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans_run(sorted.as_ref(), m, &mut restart_rng(seed, r));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut labels = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = best.labels[k] + 1;
    }
    Assignment::new(labels, m)
}
