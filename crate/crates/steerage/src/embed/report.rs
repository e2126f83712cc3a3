//! Per-cluster nearest-member report for qualitative inspection: which
//! windows sit closest to each centroid.

use super::kmeans::CentroidSet;
use super::tsne::EmbeddedPoint;

/// For each centroid, the τ values of its members sorted by ascending
/// distance, truncated to `n_nearest` (clamped to the cluster size).
pub fn cluster_report(
    centroids: &CentroidSet,
    points: &[EmbeddedPoint],
    n_nearest: usize,
) -> Vec<Vec<usize>> {
    let k = centroids.k();
    let mut per_cluster: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for (i, p) in points.iter().enumerate() {
        let c = centroids.assignment[i];
        let d = (p.coords[0] - centroids.centroids[c][0]).powi(2)
            + (p.coords[1] - centroids.centroids[c][1]).powi(2);
        per_cluster[c].push((d, p.tau));
    }
    per_cluster
        .into_iter()
        .map(|mut members| {
            members.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            members
                .into_iter()
                .take(n_nearest)
                .map(|(_, tau)| tau)
                .collect()
        })
        .collect()
}
