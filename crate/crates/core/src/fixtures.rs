//! Deterministic synthetic data for tests, demos and the bundled
//! benchmark fixtures. Everything here is a pure function of its inputs,
//! so fixture-driven runs are reproducible byte for byte.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CheckIn, Dataset, LocationRecord};
use crate::geo::LatLon;
use crate::trajectory::TrackPoint;

/// A 4 x 3 grid of venue centroids roughly a kilometer apart.
fn venue_grid(count: usize) -> Vec<LatLon> {
    (0..count)
        .map(|i| LatLon::new(40.72 + (i / 4) as f64 * 0.01, -74.00 + (i % 4) as f64 * 0.011))
        .collect()
}

/// Number of users in the periodic check-in fixture.
pub const PERIODIC_USERS: usize = 20;
/// Number of locations in the periodic check-in fixture.
pub const PERIODIC_LOCATIONS: usize = 12;
/// Days of history per user: eight full weeks.
const PERIODIC_DAYS: usize = 56;

/// A dataset of strictly periodic visitors. Every user walks a personal
/// weekly schedule: one visit per day at a day-specific hour, cycling
/// through seven slots. Most users visit seven distinct locations; a
/// handful repeat one location in two slots, which skews their weekly
/// visit counts and forces the time-of-week signal to disambiguate. The
/// next location is a deterministic function of the user and day-of-week,
/// which a sequence model can learn almost perfectly; a pure frequency
/// baseline is capped by how often the label location appears in the
/// schedule.
pub fn periodic_checkin_dataset(seed: u64) -> Dataset {
    let centroids = venue_grid(PERIODIC_LOCATIONS);
    let locations: Vec<LocationRecord> = centroids
        .iter()
        .enumerate()
        .map(|(id, &position)| LocationRecord { id: id as u32, position })
        .collect();

    let mut user_ids = Vec::with_capacity(PERIODIC_USERS);
    let mut checkins = Vec::with_capacity(PERIODIC_USERS);
    for user in 0..PERIODIC_USERS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(user as u64));
        let mut pool: Vec<u32> = (0..PERIODIC_LOCATIONS as u32).collect();
        pool.shuffle(&mut rng);
        // Six distinct locations over seven slots: the final slot repeats
        // an earlier one, so weekly visit counts are uneven and the
        // time-of-week signal must disambiguate the doubled location.
        let mut schedule: Vec<u32> = pool[..7].to_vec();
        schedule[6] = schedule[user % 6];

        let mut seq = Vec::with_capacity(PERIODIC_DAYS);
        for day in 0..PERIODIC_DAYS {
            let slot = day % 7;
            let location = schedule[slot];
            let time = day as i64 * 86_400 + (8 + slot as i64) * 3600;
            let duration = 1800 + ((user + slot) % 8) as i64 * 1800;
            seq.push(CheckIn {
                user: user as u32,
                location,
                time,
                duration,
                position: centroids[location as usize],
            });
        }
        user_ids.push(format!("user{user:02}"));
        checkins.push(seq);
    }
    Dataset::new(user_ids, locations, checkins)
}

/// Users in the GPS fixture.
pub const GPS_USERS: usize = 50;
const GPS_DAYS: i64 = 14;
const GPS_BASE_TIME: i64 = 1_600_000_000;

/// A synthetic raw GPS corpus: 50 users commuting between three personal
/// venues every day for two weeks, with sub-threshold jitter inside each
/// dwell and fast transit points between venues. Four users additionally
/// visit a rare venue once each, which the visit-count filter should
/// remove downstream.
pub fn gps_fixture() -> Vec<TrackPoint> {
    let venues = venue_grid(13); // venue 12 is the rare one
    let mut points = Vec::new();

    for user in 0..GPS_USERS {
        let user_id = format!("u{user:03}");
        let daily: [usize; 3] =
            [user % 12, (user * 5 + 3) % 12, (user * 7 + 5) % 12];
        for day in 0..GPS_DAYS {
            let day_base = GPS_BASE_TIME + day * 86_400;
            // Morning, midday, evening dwells.
            let visit_starts = [9 * 3600, 13 * 3600, 18 * 3600 + 1800];
            for (visit, (&venue, &start)) in daily.iter().zip(visit_starts.iter()).enumerate() {
                push_dwell(&mut points, &user_id, venues[venue], day_base + start, user, day, visit);
                // Two fast transit samples toward the next venue.
                if visit < 2 {
                    let from = venues[venue];
                    let to = venues[daily[visit + 1]];
                    for leg in 1..=2 {
                        let f = leg as f64 / 3.0;
                        points.push(TrackPoint {
                            user_id: user_id.clone(),
                            position: LatLon::new(
                                from.lat + (to.lat - from.lat) * f,
                                from.lon + (to.lon - from.lon) * f,
                            ),
                            timestamp: day_base + start + 2700 + leg * 240,
                        });
                    }
                }
            }
            // A handful of rare-venue dwells across the corpus: too few
            // visits to survive filtering.
            if user < 4 && day == (user as i64) + 1 {
                push_dwell(
                    &mut points,
                    &user_id,
                    venues[12],
                    day_base + 20 * 3600 + 1800,
                    user,
                    day,
                    3,
                );
            }
        }
    }
    points
}

/// Eight jittered samples spanning 40 minutes inside one dwell.
fn push_dwell(
    points: &mut Vec<TrackPoint>,
    user_id: &str,
    venue: LatLon,
    start: i64,
    user: usize,
    day: i64,
    visit: usize,
) {
    for p in 0..8i64 {
        let wobble = ((user as i64 * 13 + day * 7 + visit as i64 * 5 + p * 3) % 9 - 4) as f64;
        points.push(TrackPoint {
            user_id: user_id.to_string(),
            position: LatLon::new(venue.lat + wobble * 4e-5, venue.lon + wobble * 3e-5),
            timestamp: start + p * 343,
        });
    }
}

/// Renders track points in the raw GPS CSV format.
pub fn write_gps_csv(points: &[TrackPoint]) -> String {
    let mut out = String::from("user_id,lat,lon,timestamp\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.user_id, p.position.lat, p.position.lon, p.timestamp);
    }
    out
}

/// A small Foursquare-style TSV: six users revisiting four venues in
/// bursts of three or four check-ins per day, enough to survive the
/// default filter thresholds.
pub fn checkin_tsv_fixture() -> String {
    let venues = [
        ("v_cafe", 40.721, -74.001),
        ("v_gym", 40.731, -74.012),
        ("v_office", 40.741, -74.023),
        ("v_park", 40.751, -74.034),
    ];
    let mut out = String::new();
    for user in 0..6usize {
        for day in 0..6i64 {
            for slot in 0..4usize {
                let venue = venues[(user + day as usize + slot) % venues.len()];
                let time = GPS_BASE_TIME + day * 86_400 + (9 + 3 * slot as i64) * 3600
                    + (user as i64) * 120;
                let stamp = chrono::DateTime::from_timestamp(time, 0)
                    .expect("valid timestamp")
                    .format("%a %b %d %H:%M:%S +0000 %Y");
                let _ = writeln!(
                    out,
                    "user_{user}\t{}\tGeneric\t{}\t{}\t0\t{stamp}",
                    venue.0, venue.1, venue.2
                );
            }
        }
    }
    out
}
