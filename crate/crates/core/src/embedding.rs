//! Learnable lookup tables and interval embeddings.
//!
//! Each check-in embeds as the sum of its user, location, hour-of-week and
//! duration-bucket rows. Interval matrices embed through two learned unit
//! vectors and a reduction vector, collapsing each (time gap, distance)
//! pair to a single scalar that is later added to an attention logit.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::dataset::{CheckIn, RelationMatrices};
use crate::error::{Error, Result};

/// Hour-of-week slots for the time embedding.
pub const TIME_SLOTS: usize = 168;

/// Default number of half-hour duration buckets (caps at 24 h).
pub const DEFAULT_DURATION_BUCKETS: usize = 48;

const SECONDS_PER_BUCKET: i64 = 1800;
const SECONDS_PER_DAY: i64 = 86_400;

/// Maps a timestamp to its hour-of-week slot in [0, 168). The Unix epoch
/// fell on a Thursday, hence the +3 day offset with Monday as day zero.
pub fn discretize_time(t: i64) -> usize {
    let day_of_week = (t.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7);
    let hour_of_day = t.rem_euclid(SECONDS_PER_DAY) / 3600;
    (day_of_week * 24 + hour_of_day) as usize
}

/// Maps a non-negative duration to a half-hour bucket, capped at the last.
pub fn bucketize_duration(d: i64, buckets: usize) -> usize {
    debug_assert!(d >= 0 && buckets >= 1);
    ((d / SECONDS_PER_BUCKET) as usize).min(buckets - 1)
}

/// All lookup tables plus the interval-embedding weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub user: Array2<f64>,
    pub location: Array2<f64>,
    pub time_of_week: Array2<f64>,
    pub duration: Array2<f64>,
    /// Unit embedding scaled by each time interval.
    pub unit_time: Array1<f64>,
    /// Unit embedding scaled by each distance.
    pub unit_dist: Array1<f64>,
    /// Reduction weights collapsing an interval embedding to a scalar.
    pub reduce: Array1<f64>,
}

impl EmbeddingTables {
    /// Uniform init in [-1/sqrt(d), +1/sqrt(d)]. Tables are drawn in field
    /// order so the layout below pins the random stream.
    pub fn init(
        users: usize,
        locations: usize,
        duration_buckets: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut mat = |rows: usize| {
            Array2::from_shape_fn((rows, dim), |_| rng.random_range(-bound..=bound))
        };
        let user = mat(users);
        let location = mat(locations);
        let time_of_week = mat(TIME_SLOTS);
        let duration = mat(duration_buckets);
        let mut vec_ = || Array1::from_shape_fn(dim, |_| rng.random_range(-bound..=bound));
        let unit_time = vec_();
        let unit_dist = vec_();
        let reduce = vec_();
        Self { user, location, time_of_week, duration, unit_time, unit_dist, reduce }
    }

    pub fn zeros(users: usize, locations: usize, duration_buckets: usize, dim: usize) -> Self {
        Self {
            user: Array2::zeros((users, dim)),
            location: Array2::zeros((locations, dim)),
            time_of_week: Array2::zeros((TIME_SLOTS, dim)),
            duration: Array2::zeros((duration_buckets, dim)),
            unit_time: Array1::zeros(dim),
            unit_dist: Array1::zeros(dim),
            reduce: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.user.ncols()
    }

    /// Scalar weights applied to the time and distance interval matrices:
    /// the reduction of each pair is linear, so the whole interval
    /// embedding collapses to `time_weight * dt + dist_weight * ds`.
    pub fn interval_weights(&self) -> (f64, f64) {
        (self.reduce.dot(&self.unit_time), self.reduce.dot(&self.unit_dist))
    }
}

/// Embeds one check-in as the sum of its four table rows. The duration
/// term drops out when `use_duration` is off.
pub fn embed_checkin(
    checkin: &CheckIn,
    tables: &EmbeddingTables,
    use_duration: bool,
) -> Result<Array1<f64>> {
    let user = checkin.user as usize;
    let location = checkin.location as usize;
    if user >= tables.user.nrows() {
        return Err(Error::UnknownId { kind: "user", id: checkin.user.to_string() });
    }
    if location >= tables.location.nrows() {
        return Err(Error::UnknownId { kind: "location", id: checkin.location.to_string() });
    }
    let slot = discretize_time(checkin.time);
    let mut row = &tables.user.row(user) + &tables.location.row(location);
    row += &tables.time_of_week.row(slot);
    if use_duration {
        let bucket = bucketize_duration(checkin.duration.max(0), tables.duration.nrows());
        row += &tables.duration.row(bucket);
    }
    Ok(row)
}

/// Stacks [`embed_checkin`] rows for a (possibly empty) sub-trajectory.
pub fn embed_sequence(
    part: &[CheckIn],
    tables: &EmbeddingTables,
    use_duration: bool,
) -> Result<Array2<f64>> {
    let dim = tables.dim();
    let mut out = Array2::zeros((part.len(), dim));
    for (i, checkin) in part.iter().enumerate() {
        out.row_mut(i).assign(&embed_checkin(checkin, tables, use_duration)?);
    }
    Ok(out)
}

/// Scalar interval embeddings added to the self-attention logits (the
/// pairwise matrices) and to the matching logits (the candidate matrices).
pub fn embed_intervals(rel: &RelationMatrices, tables: &EmbeddingTables) -> (Array2<f64>, Array2<f64>) {
    let (tw, dw) = tables.interval_weights();
    let pairwise = &rel.dt * tw + &rel.ds * dw;
    let candidate = &rel.cand_dt * tw + &rel.cand_ds * dw;
    (pairwise, candidate)
}
