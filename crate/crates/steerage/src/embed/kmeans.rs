//! K-means over the 2-D embedding: k-means++ seeding, Lloyd iterations to
//! an assignment fixpoint, farthest-point repair for empty clusters.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tsne::EmbeddedPoint;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub centroids: Vec<[f64; 2]>,
    /// Point index → centroid index, aligned with the input point order.
    pub assignment: Vec<usize>,
    /// Inertia recorded after every assignment phase; non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn inertia(&self) -> f64 {
        *self.inertia_trace.last().expect("at least one phase runs")
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

fn nearest(coords: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &centroid) in centroids.iter().enumerate() {
        let d = dist2(coords, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++: first centroid uniform, the rest sampled with probability
/// proportional to squared distance from the nearest chosen centroid.
fn seed_centroids(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            points[chosen]
        } else {
            // All remaining mass is zero (duplicate-heavy input): take the
            // first point not already a centroid, or reuse point 0.
            points
                .iter()
                .copied()
                .find(|p| !centroids.contains(p))
                .unwrap_or(points[0])
        };
        centroids.push(next);
        for (i, &p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, next));
        }
    }
    centroids
}

pub fn kmeans(points: &[EmbeddedPoint], k: usize, seed: u64) -> Result<CentroidSet> {
    let coords: Vec<[f64; 2]> = points.iter().map(|p| p.coords).collect();
    kmeans_coords(&coords, k, seed)
}

pub fn kmeans_coords(points: &[[f64; 2]], k: usize, seed: u64) -> Result<CentroidSet> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    if k > points.len() {
        return Err(Error::contract(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut inertia_trace = Vec::new();

    for _ in 0..MAX_LLOYD_ITERATIONS {
        // Assignment phase. Ties keep the current assignment so a cluster
        // repaired onto a duplicate point is not re-emptied by index order.
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, &p) in points.iter().enumerate() {
            let (mut c, d) = nearest(p, &centroids);
            if assignment[i] != usize::MAX && dist2(p, centroids[assignment[i]]) <= d {
                c = assignment[i];
            }
            inertia += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        inertia_trace.push(inertia);
        if !changed {
            break;
        }

        // Update phase: means of members, then farthest-point repair for
        // clusters that lost everything.
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            let c = assignment[i];
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseat the empty centroid on the worst-served point that
                // a cluster with at least two members can spare; stealing a
                // sole member would just move the hole. k <= N guarantees
                // such a donor exists while any cluster is empty.
                let (far_idx, _) = points
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| counts[assignment[i]] > 1)
                    .map(|(i, &p)| (i, dist2(p, centroids[assignment[i]])))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"))
                    .expect("some cluster has a spare point");
                counts[assignment[far_idx]] -= 1;
                centroids[c] = points[far_idx];
                assignment[far_idx] = c;
                counts[c] = 1;
            }
        }
    }

    Ok(CentroidSet {
        centroids,
        assignment,
        inertia_trace,
    })
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn purity(assignment: &[usize], labels: &[usize], k: usize) -> f64 {
    assert_eq!(assignment.len(), labels.len());
    if assignment.is_empty() {
        return 0.0;
    }
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; n_labels]; k];
    for (&c, &l) in assignment.iter().zip(labels) {
        counts[c][l] += 1;
    }
    let majority: usize = counts
        .iter()
        .map(|row| row.iter().max().copied().unwrap_or(0))
        .sum();
    majority as f64 / assignment.len() as f64
}
