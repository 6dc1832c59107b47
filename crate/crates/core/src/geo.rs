//! Spherical distance and small planar-geometry helpers.
//!
//! Distances use the haversine formula on a sphere of radius 6,371 km, the
//! standard approximation for check-in scale geodesy. Hull construction
//! treats (lon, lat) as planar coordinates, which is adequate for the
//! building-sized clusters produced by stay-point aggregation.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn in_bounds(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in meters between two points.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (la1, lo1) = (a.lat.to_radians(), a.lon.to_radians());
    let (la2, lo2) = (b.lat.to_radians(), b.lon.to_radians());
    let dla = la2 - la1;
    let dlo = lo2 - lo1;
    let h = (dla / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlo / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Arithmetic mean of a non-empty set of coordinates.
pub fn centroid(points: &[LatLon]) -> LatLon {
    debug_assert!(!points.is_empty());
    let n = points.len() as f64;
    let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
    let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
    LatLon::new(lat, lon)
}

/// Cross product of (b - a) x (c - a) in (lon, lat) coordinates.
fn cross(a: LatLon, b: LatLon, c: LatLon) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

/// Convex hull of a point set via Andrew's monotone chain.
///
/// Returns the hull vertices in counter-clockwise order starting from the
/// lexicographically smallest point. Degenerate inputs collapse: a single
/// distinct point yields one vertex, collinear points yield the two
/// endpoints of the segment.
pub fn convex_hull(points: &[LatLon]) -> Vec<LatLon> {
    let mut pts: Vec<LatLon> = points.to_vec();
    pts.sort_by(|a, b| {
        (a.lon, a.lat)
            .partial_cmp(&(b.lon, b.lat))
            .expect("coordinates are finite")
    });
    pts.dedup_by(|a, b| a.lon == b.lon && a.lat == b.lat);

    if pts.len() <= 2 {
        return pts;
    }

    let mut hull: Vec<LatLon> = Vec::with_capacity(pts.len() * 2);
    // Lower hull, then upper hull over the reversed sweep. Collinear points
    // are dropped (strict turns only), so the result has minimal vertices.
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Whether `p` lies inside or on a hull produced by [`convex_hull`].
///
/// `tol` is a slack in degree units absorbing floating-point noise from
/// centroid averaging. Degenerate hulls (point, segment) are handled.
pub fn point_in_hull(hull: &[LatLon], p: LatLon, tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (p.lon - hull[0].lon).abs() <= tol && (p.lat - hull[0].lat).abs() <= tol,
        2 => point_near_segment(hull[0], hull[1], p, tol),
        _ => {
            // Counter-clockwise polygon: inside iff not strictly right of any edge.
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                if cross(a, b, p) < -tol {
                    return false;
                }
            }
            true
        }
    }
}

fn point_near_segment(a: LatLon, b: LatLon, p: LatLon, tol: f64) -> bool {
    let (ax, ay) = (a.lon, a.lat);
    let (bx, by) = (b.lon, b.lat);
    let (px, py) = (p.lon, p.lat);
    let len2 = (bx - ax).powi(2) + (by - ay).powi(2);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * (bx - ax) + (py - ay) * (by - ay)) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * (bx - ax), ay + t * (by - ay));
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() <= tol
}
