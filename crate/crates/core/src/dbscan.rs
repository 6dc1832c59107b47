//! Density-based clustering over an abstract neighbor predicate.
//!
//! Classic DBSCAN with a deterministic scan order: points are visited by
//! index, cluster ids are assigned in discovery order, and a border point
//! joins the first cluster that reaches it.

/// Runs DBSCAN over `n` items. `is_neighbor(a, b)` decides whether the
/// distance between items `a` and `b` is within eps; it must be symmetric
/// and reflexive. A point is core when at least `min_pts` items (itself
/// included) are neighbors.
///
/// Returns one label per item: `Some(cluster)` or `None` for noise.
pub fn dbscan(n: usize, min_pts: usize, is_neighbor: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| is_neighbor(i, j)).collect())
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;

    for seed in 0..n {
        if visited[seed] || !is_core[seed] {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;

        // Expand from the seed core point; only core points propagate.
        let mut frontier = vec![seed];
        visited[seed] = true;
        labels[seed] = Some(cluster);
        while let Some(p) = frontier.pop() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                }
                if is_core[q] && !visited[q] {
                    visited[q] = true;
                    frontier.push(q);
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn by_distance(points: &[f64], eps: f64) -> impl Fn(usize, usize) -> bool + '_ {
        move |a, b| (points[a] - points[b]).abs() <= eps
    }

    #[test]
    fn empty_input() {
        assert!(dbscan(0, 3, |_, _| true).is_empty());
    }

    #[test]
    fn two_blobs_and_noise() {
        let pts = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2, 55.0];
        let labels = dbscan(pts.len(), 3, by_distance(&pts, 0.5));
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[1], labels[2]);
        assert_eq!(labels[3], labels[4]);
        assert_eq!(labels[4], labels[5]);
        assert_ne!(labels[0], labels[3]);
        assert_eq!(labels[6], None);
        assert!(labels[0].is_some() && labels[3].is_some());
    }

    #[test]
    fn chain_is_density_connected() {
        // Each point is within eps of its neighbors only; min_pts=3 counts
        // self + both sides, so interior points are core and the chain is
        // one cluster.
        let pts: Vec<f64> = (0..10).map(|k| k as f64 * 0.4).collect();
        let labels = dbscan(pts.len(), 3, by_distance(&pts, 0.5));
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn min_pts_one_makes_every_point_core() {
        let pts = [0.0, 100.0];
        let labels = dbscan(pts.len(), 1, by_distance(&pts, 0.5));
        assert_eq!(labels, vec![Some(0), Some(1)]);
    }
}
