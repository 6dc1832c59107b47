//! Pairwise and candidate interval matrices.
//!
//! Raw time gaps and haversine distances are scaled by dataset-level maxima
//! so the values entering the attention logits stay in [0, ~1]. The maxima
//! come from the training split only and are clamped to at least 1 to keep
//! the division well-defined.

use ndarray::{Array1, Array2};

use super::{CheckIn, Dataset, LocationRecord};
use crate::geo::haversine;

/// Training-split scale factors for the two interval families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizers {
    /// Largest gap between a training sample's prediction time and its
    /// earliest input check-in, in seconds. Bounds every pairwise and
    /// candidate time interval the model can see during training.
    pub time_max: f64,
    /// Largest pairwise distance between location centroids, in meters.
    pub space_max: f64,
}

impl Normalizers {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut time_max = 1.0f64;
        for checkins in &dataset.checkins {
            let m = checkins.len();
            if m >= 4 {
                // Latest training label is at position m-2 (1-based).
                let span = (checkins[m - 3].time - checkins[0].time) as f64;
                time_max = time_max.max(span);
            }
        }
        let mut space_max = 1.0f64;
        for (i, a) in dataset.locations.iter().enumerate() {
            for b in &dataset.locations[i + 1..] {
                space_max = space_max.max(haversine(a.position, b.position));
            }
        }
        Self { time_max, space_max }
    }
}

/// Normalized interval matrices for one sub-trajectory of length `n`
/// against `c` candidate locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrices {
    /// n x n pairwise time gaps.
    pub dt: Array2<f64>,
    /// n x n pairwise distances.
    pub ds: Array2<f64>,
    /// c x n gaps between the prediction time and each check-in.
    pub cand_dt: Array2<f64>,
    /// c x n distances between each candidate and each check-in.
    pub cand_ds: Array2<f64>,
}

/// Builds the four matrices for one sub-trajectory. `candidates` holds the
/// location ids being scored (the full catalog at evaluation time, the
/// label plus its negatives during training).
pub fn build_relation_matrices(
    part: &[CheckIn],
    query_time: i64,
    candidates: &[u32],
    locations: &[LocationRecord],
    norm: &Normalizers,
) -> RelationMatrices {
    let n = part.len();
    let c = candidates.len();

    let mut dt = Array2::zeros((n, n));
    let mut ds = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (part[i].time - part[j].time).unsigned_abs() as f64 / norm.time_max;
            let dist = haversine(part[i].position, part[j].position) / norm.space_max;
            dt[[i, j]] = gap;
            dt[[j, i]] = gap;
            ds[[i, j]] = dist;
            ds[[j, i]] = dist;
        }
    }

    let query_gaps: Array1<f64> = part
        .iter()
        .map(|ck| (query_time - ck.time).unsigned_abs() as f64 / norm.time_max)
        .collect();
    let mut cand_dt = Array2::zeros((c, n));
    let mut cand_ds = Array2::zeros((c, n));
    for (row, &cand) in candidates.iter().enumerate() {
        let cand_pos = locations[cand as usize].position;
        for j in 0..n {
            cand_dt[[row, j]] = query_gaps[j];
            cand_ds[[row, j]] = haversine(cand_pos, part[j].position) / norm.space_max;
        }
    }

    RelationMatrices { dt, ds, cand_dt, cand_ds }
}
