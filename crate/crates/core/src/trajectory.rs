//! Raw GPS streams to stay points to clustered locations.
//!
//! The pipeline is: sliding-window dwell detection over each user's track,
//! density clustering of the detected stays across all users, convex-hull
//! geometry per cluster, and finally attaching the cluster id back onto
//! each stay. Noise stays (unclustered) are dropped.

use serde::{Deserialize, Serialize};

use crate::dbscan;
use crate::error::{Error, Result};
use crate::geo::{centroid, convex_hull, haversine, LatLon};

/// One raw GPS sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub user_id: String,
    pub position: LatLon,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
}

/// A detected dwell: the user stayed within a distance bound for at least
/// the time bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    pub user_id: String,
    pub start_time: i64,
    /// Dwell duration in seconds (last minus first member timestamp).
    pub duration: i64,
    pub centroid: LatLon,
    pub member_count: usize,
    /// Assigned by clustering; `None` until enrichment.
    pub location_id: Option<u32>,
}

/// A cluster of spatially proximate stay points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: u32,
    pub centroid: LatLon,
    /// Convex hull of member centroids; degenerates to a point or segment
    /// for fewer than three distinct members.
    pub hull: Vec<LatLon>,
    /// Indices into the stay-point list this location was built from.
    pub member_stays: Vec<usize>,
}

/// Sliding-window dwell detection over a time-sorted track.
///
/// The window grows while every point stays within `dist_threshold` meters
/// of the window's first point. When growth stops (a point breaks the bound
/// or the track ends) and the window spans at least `time_threshold`
/// seconds, a stay point is emitted and the scan resumes past the window;
/// otherwise the scan advances by one point. Emitted windows never overlap.
pub fn detect_stay_points(
    points: &[TrackPoint],
    dist_threshold: f64,
    time_threshold: i64,
) -> Vec<StayPoint> {
    debug_assert!(dist_threshold > 0.0 && time_threshold > 0);
    let mut stays = Vec::new();
    let n = points.len();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && haversine(points[i].position, points[j].position) <= dist_threshold {
            j += 1;
        }
        let span = points[j - 1].timestamp - points[i].timestamp;
        if span >= time_threshold {
            let coords: Vec<LatLon> = points[i..j].iter().map(|p| p.position).collect();
            stays.push(StayPoint {
                user_id: points[i].user_id.clone(),
                start_time: points[i].timestamp,
                duration: span,
                centroid: centroid(&coords),
                member_count: j - i,
                location_id: None,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    stays
}

/// DBSCAN over stay-point centroids with a haversine metric.
///
/// Core points need at least `min_pts` neighbors within `eps` meters,
/// counting themselves. Noise stays receive no location. Location ids are
/// assigned by earliest member `start_time`, ties broken by centroid.
pub fn cluster_stays_dbscan(stays: &[StayPoint], eps: f64, min_pts: usize) -> Vec<Location> {
    debug_assert!(eps > 0.0 && min_pts >= 1);
    let coords: Vec<LatLon> = stays.iter().map(|s| s.centroid).collect();
    let labels = dbscan::dbscan(coords.len(), min_pts, |a, b| {
        haversine(coords[a], coords[b]) <= eps
    });

    let num_clusters = labels.iter().filter_map(|l| *l).max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
    for (idx, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            members[*c].push(idx);
        }
    }

    let mut locations: Vec<Location> = members
        .into_iter()
        .map(|member_stays| {
            let member_points: Vec<StayPoint> =
                member_stays.iter().map(|&i| stays[i].clone()).collect();
            let (hull, center) = location_geometry(&member_points).expect("clusters are non-empty");
            Location {
                id: 0,
                centroid: center,
                hull,
                member_stays,
            }
        })
        .collect();

    locations.sort_by(|a, b| {
        let ka = sort_key(a, stays);
        let kb = sort_key(b, stays);
        ka.partial_cmp(&kb).expect("finite sort key")
    });
    for (id, loc) in locations.iter_mut().enumerate() {
        loc.id = id as u32;
    }
    locations
}

fn sort_key(loc: &Location, stays: &[StayPoint]) -> (i64, f64, f64) {
    let earliest = loc
        .member_stays
        .iter()
        .map(|&i| stays[i].start_time)
        .min()
        .expect("clusters are non-empty");
    (earliest, loc.centroid.lat, loc.centroid.lon)
}

/// Convex hull and centroid of a cluster's member stays.
pub fn location_geometry(members: &[StayPoint]) -> Result<(Vec<LatLon>, LatLon)> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let coords: Vec<LatLon> = members.iter().map(|s| s.centroid).collect();
    Ok((convex_hull(&coords), centroid(&coords)))
}

/// Attaches location ids to clustered stays and drops noise stays.
/// Relative order is preserved.
pub fn enrich_stays(stays: &[StayPoint], locations: &[Location]) -> Vec<StayPoint> {
    let mut assignment: Vec<Option<u32>> = vec![None; stays.len()];
    for loc in locations {
        for &idx in &loc.member_stays {
            assignment[idx] = Some(loc.id);
        }
    }
    stays
        .iter()
        .zip(assignment)
        .filter_map(|(stay, location_id)| {
            location_id.map(|id| StayPoint {
                location_id: Some(id),
                ..stay.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(user: &str, lat: f64, lon: f64, t: i64) -> TrackPoint {
        TrackPoint {
            user_id: user.to_string(),
            position: LatLon::new(lat, lon),
            timestamp: t,
        }
    }

    fn stay_at(lat: f64, lon: f64, t: i64) -> StayPoint {
        StayPoint {
            user_id: "u".to_string(),
            start_time: t,
            duration: 2000,
            centroid: LatLon::new(lat, lon),
            member_count: 5,
            location_id: None,
        }
    }

    #[test]
    fn empty_track_yields_no_stays() {
        assert!(detect_stay_points(&[], 200.0, 1800).is_empty());
    }

    #[test]
    fn tight_dwell_becomes_one_stay() {
        // Ten points within ~50 m over 2,400 s. Manual window walk: the
        // window never breaks the 200 m bound, spans 2,400 s >= 1,800 s,
        // so exactly one stay of duration 2,400 covers all points.
        let mut points = Vec::new();
        for k in 0..10 {
            let jitter = (k as f64) * 0.00004; // ~4.4 m steps
            points.push(pt("u", 40.0 + jitter, -74.0, 1000 + k * 266));
        }
        points.last_mut().unwrap().timestamp = 1000 + 2400;
        let stays = detect_stay_points(&points, 200.0, 1800);
        assert_eq!(stays.len(), 1);
        assert_eq!(stays[0].duration, 2400);
        assert_eq!(stays[0].member_count, 10);
        assert_eq!(stays[0].start_time, 1000);
    }

    #[test]
    fn fast_movement_yields_no_stays() {
        // Consecutive points ~1,000 m apart at 60 s intervals: no window
        // ever satisfies the 200 m bound.
        let points: Vec<TrackPoint> = (0..20)
            .map(|k| pt("u", 40.0 + k as f64 * 0.009, -74.0, k * 60))
            .collect();
        assert!(detect_stay_points(&points, 200.0, 1800).is_empty());
    }

    #[test]
    fn emitted_windows_are_disjoint_and_long_enough() {
        // Two dwells separated by a fast transit leg.
        let mut points = Vec::new();
        for k in 0..8 {
            points.push(pt("u", 40.0, -74.0, k * 300));
        }
        for k in 0..5 {
            points.push(pt("u", 40.0 + 0.01 * (k + 1) as f64, -74.0, 2100 + k * 60 + 60));
        }
        for k in 0..8 {
            points.push(pt("u", 40.1, -74.0, 3000 + k * 300));
        }
        let stays = detect_stay_points(&points, 200.0, 1800);
        assert_eq!(stays.len(), 2);
        for s in &stays {
            assert!(s.duration >= 1800);
        }
        assert!(stays[0].start_time + stays[0].duration <= stays[1].start_time);
    }

    #[test]
    fn two_groups_form_two_locations() {
        let mut stays = Vec::new();
        for k in 0..5 {
            stays.push(stay_at(40.0 + k as f64 * 1e-4, -74.0, k));
        }
        for k in 0..5 {
            stays.push(stay_at(40.09 + k as f64 * 1e-4, -74.0, 100 + k));
        }
        let locations = cluster_stays_dbscan(&stays, 150.0, 3);
        assert_eq!(locations.len(), 2);
        assert_eq!(locations[0].id, 0);
        assert_eq!(locations[1].id, 1);
        // Ids ordered by earliest member start time.
        assert!(locations[0].member_stays.contains(&0));
    }

    #[test]
    fn identical_coordinates_form_one_location() {
        let stays: Vec<StayPoint> = (0..6).map(|k| stay_at(40.0, -74.0, k)).collect();
        let locations = cluster_stays_dbscan(&stays, 150.0, 6);
        assert_eq!(locations.len(), 1);
        assert_eq!(locations[0].member_stays.len(), 6);
    }

    #[test]
    fn min_pts_above_population_yields_all_noise() {
        let stays: Vec<StayPoint> = (0..6).map(|k| stay_at(40.0, -74.0, k)).collect();
        assert!(cluster_stays_dbscan(&stays, 150.0, 7).is_empty());
    }

    #[test]
    fn geometry_of_empty_cluster_is_an_error() {
        assert!(matches!(location_geometry(&[]), Err(Error::EmptyCluster)));
    }

    #[test]
    fn geometry_of_single_member_is_a_point() {
        let (hull, center) = location_geometry(&[stay_at(40.0, -74.0, 0)]).unwrap();
        assert_eq!(hull, vec![LatLon::new(40.0, -74.0)]);
        assert_eq!(center, LatLon::new(40.0, -74.0));
    }

    #[test]
    fn enrich_attaches_ids_and_drops_noise() {
        let mut stays: Vec<StayPoint> = (0..5).map(|k| stay_at(40.0, -74.0, k)).collect();
        stays.push(stay_at(50.0, 10.0, 99)); // isolated: noise
        let locations = cluster_stays_dbscan(&stays, 150.0, 3);
        assert_eq!(locations.len(), 1);
        let enriched = enrich_stays(&stays, &locations);
        assert_eq!(enriched.len(), 5);
        assert!(enriched.iter().all(|s| s.location_id == Some(0)));
    }
}
