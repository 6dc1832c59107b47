//! End-to-end preprocessing: raw input to a model-ready dataset.
//!
//! GPS tracks run through stay-point detection and clustering before
//! sessionization and filtering; check-in logs already name their venues,
//! so they skip the stay-point stage and instead derive activity durations
//! from visit gaps after filtering.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::dataset::{
    filter_dataset, sessionize, CheckIn, Dataset, Event, FilterRules, LocationRecord,
    RawCheckinRow,
};
use crate::error::Result;
use crate::geo::LatLon;
use crate::trajectory::{cluster_stays_dbscan, detect_stay_points, enrich_stays, TrackPoint};
use crate::training::derive_duration;

/// Thresholds for the whole preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Stay-point window distance bound in meters.
    pub dist_threshold: f64,
    /// Stay-point minimum dwell in seconds.
    pub time_threshold: i64,
    /// Clustering radius in meters.
    pub eps: f64,
    /// Clustering density threshold (neighbors including self).
    pub min_pts: usize,
    /// Session window in seconds.
    pub session_window: i64,
    pub filter: FilterRules,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            dist_threshold: 200.0,
            time_threshold: 1800,
            eps: 150.0,
            min_pts: 3,
            session_window: 86_400,
            filter: FilterRules::default(),
        }
    }
}

/// Before/after counts reported by `preprocess`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessStats {
    pub stay_point_stage: bool,
    pub raw_records: usize,
    pub users_before: usize,
    pub locations_before: usize,
    pub checkins_before: usize,
    pub users_after: usize,
    pub locations_after: usize,
    pub checkins_after: usize,
}

impl fmt::Display for PreprocessStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "stay-point stage: {}",
            if self.stay_point_stage { "run" } else { "skipped" }
        )?;
        writeln!(f, "raw records: {}", self.raw_records)?;
        writeln!(f, "users: {} -> {}", self.users_before, self.users_after)?;
        writeln!(f, "locations: {} -> {}", self.locations_before, self.locations_after)?;
        write!(f, "check-ins: {} -> {}", self.checkins_before, self.checkins_after)
    }
}

/// GPS pipeline: per-user stay-point detection, global clustering,
/// enrichment, then the shared sessionize/filter/re-index tail.
pub fn preprocess_gps(
    points: Vec<TrackPoint>,
    config: &PreprocessConfig,
) -> Result<(Dataset, PreprocessStats)> {
    let raw_records = points.len();
    let mut per_user: BTreeMap<String, Vec<TrackPoint>> = BTreeMap::new();
    for p in points {
        per_user.entry(p.user_id.clone()).or_default().push(p);
    }
    let users: Vec<(String, Vec<TrackPoint>)> = per_user
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|p| p.timestamp);
            pts.dedup_by_key(|p| p.timestamp);
            (id, pts)
        })
        .collect();

    // Stay detection is pure per user; users run in parallel and are
    // collected back in user-id order.
    let per_user_stays: Vec<Vec<crate::trajectory::StayPoint>> = users
        .par_iter()
        .map(|(_, pts)| detect_stay_points(pts, config.dist_threshold, config.time_threshold))
        .collect();
    let all_stays: Vec<crate::trajectory::StayPoint> =
        per_user_stays.into_iter().flatten().collect();

    let locations = cluster_stays_dbscan(&all_stays, config.eps, config.min_pts);
    let locations_before = locations.len();
    let centroids: Vec<LatLon> = locations.iter().map(|l| l.centroid).collect();
    let enriched = enrich_stays(&all_stays, &locations);

    let mut events: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for stay in &enriched {
        let location = stay.location_id.expect("enriched stays carry a location");
        events.entry(stay.user_id.clone()).or_default().push(Event {
            location,
            time: stay.start_time,
            duration: stay.duration,
            position: centroids[location as usize],
        });
    }

    let location_positions = move |id: u32| centroids[id as usize];
    finish(events, location_positions, locations_before, raw_records, true, false, config)
}

/// Check-in pipeline: venues map straight to locations, durations are
/// derived from visit gaps once filtering has settled.
pub fn preprocess_checkins(
    rows: Vec<RawCheckinRow>,
    config: &PreprocessConfig,
) -> Result<(Dataset, PreprocessStats)> {
    let raw_records = rows.len();
    // Venue ids become provisional location ids in first-appearance order;
    // the first row's coordinates stand for the venue.
    let mut venue_ids: BTreeMap<String, u32> = BTreeMap::new();
    let mut venue_positions: Vec<LatLon> = Vec::new();
    let mut events: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for row in &rows {
        let next = venue_ids.len() as u32;
        let location = *venue_ids.entry(row.venue.clone()).or_insert_with(|| {
            venue_positions.push(row.position);
            next
        });
        events.entry(row.user.clone()).or_default().push(Event {
            location,
            time: row.time,
            duration: 0,
            position: venue_positions[location as usize],
        });
    }
    let locations_before = venue_positions.len();

    let location_positions = move |id: u32| venue_positions[id as usize];
    finish(events, location_positions, locations_before, raw_records, false, true, config)
}

/// Shared tail: sort/dedup, sessionize, filter to a fixed point, re-index
/// locations densely, optionally derive durations, assemble the dataset.
fn finish(
    events: BTreeMap<String, Vec<Event>>,
    location_positions: impl Fn(u32) -> LatLon,
    locations_before: usize,
    raw_records: usize,
    stay_point_stage: bool,
    derive_durations: bool,
    config: &PreprocessConfig,
) -> Result<(Dataset, PreprocessStats)> {
    let users_before = events.len();
    let mut checkins_before = 0;
    let sessions: Vec<(String, Vec<Vec<Event>>)> = events
        .into_iter()
        .map(|(user, mut evs)| {
            evs.sort_by_key(|e| e.time);
            evs.dedup_by_key(|e| e.time);
            checkins_before += evs.len();
            let sess = sessionize(&evs, config.session_window);
            (user, sess)
        })
        .collect();

    let filtered = filter_dataset(sessions, config.filter)?;

    // Dense re-index in ascending old-id order.
    let mut surviving: Vec<u32> = filtered
        .iter()
        .flat_map(|(_, ss)| ss.iter().flat_map(|s| s.iter().map(|e| e.location)))
        .collect();
    surviving.sort_unstable();
    surviving.dedup();
    let remap: BTreeMap<u32, u32> = surviving
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new as u32))
        .collect();
    let locations: Vec<LocationRecord> = surviving
        .iter()
        .enumerate()
        .map(|(new, &old)| LocationRecord { id: new as u32, position: location_positions(old) })
        .collect();

    let mut user_ids = Vec::with_capacity(filtered.len());
    let mut checkins = Vec::with_capacity(filtered.len());
    for (user_idx, (user, sessions)) in filtered.into_iter().enumerate() {
        let events: Vec<Event> = sessions.into_iter().flatten().collect();
        let durations: Vec<i64> = if derive_durations {
            let times: Vec<i64> = events.iter().map(|e| e.time).collect();
            derive_duration(&times)
        } else {
            events.iter().map(|e| e.duration).collect()
        };
        let user_checkins: Vec<CheckIn> = events
            .iter()
            .zip(durations)
            .map(|(e, duration)| CheckIn {
                user: user_idx as u32,
                location: remap[&e.location],
                time: e.time,
                duration,
                position: location_positions(e.location),
            })
            .collect();
        user_ids.push(user);
        checkins.push(user_checkins);
    }

    let dataset = Dataset::new(user_ids, locations, checkins);
    let stats = PreprocessStats {
        stay_point_stage,
        raw_records,
        users_before,
        locations_before,
        checkins_before,
        users_after: dataset.user_count,
        locations_after: dataset.location_count,
        checkins_after: dataset.checkin_count,
    };
    Ok((dataset, stats))
}
