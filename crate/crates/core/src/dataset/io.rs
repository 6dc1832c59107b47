//! Parsers for the two supported raw inputs.
//!
//! GPS tracks arrive as CSV with the header `user_id,lat,lon,timestamp`.
//! Check-in logs arrive as tab-separated rows in the classic Foursquare
//! layout: `user_id, venue_id, category, lat, lon, tz_offset_min, utc_time`.
//! Category and timezone offset are parsed for validity but not used.

use std::io::Read;

use chrono::DateTime;

use crate::error::{Error, Result};
use crate::geo::LatLon;
use crate::trajectory::TrackPoint;

const GPS_HEADER: [&str; 4] = ["user_id", "lat", "lon", "timestamp"];
const CHECKIN_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

/// One parsed check-in row, still keyed by the raw venue identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckinRow {
    pub user: String,
    pub venue: String,
    pub position: LatLon,
    /// Seconds since the Unix epoch (UTC).
    pub time: i64,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn coordinate(field: &str, name: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid {name} '{field}'")))
}

/// Reads GPS track points. Rows are validated but not reordered; sorting
/// and deduplication happen downstream where per-user sequences are built.
pub fn parse_gps_csv<R: Read>(reader: R) -> Result<Vec<TrackPoint>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != GPS_HEADER {
        return Err(parse_err(
            1,
            format!("expected header '{}', found '{}'", GPS_HEADER.join(","), found.join(",")),
        ));
    }

    let mut points = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let line = idx + 2; // one header line before the data
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let user_id = record[0].to_string();
        if user_id.is_empty() {
            return Err(parse_err(line, "empty user_id"));
        }
        let position = LatLon::new(
            coordinate(&record[1], "lat", line)?,
            coordinate(&record[2], "lon", line)?,
        );
        if !position.in_bounds() {
            return Err(parse_err(
                line,
                format!("coordinates out of bounds: {} {}", position.lat, position.lon),
            ));
        }
        let timestamp = record[3]
            .parse::<i64>()
            .map_err(|_| parse_err(line, format!("invalid timestamp '{}'", &record[3])))?;
        points.push(TrackPoint { user_id, position, timestamp });
    }
    Ok(points)
}

/// Reads Foursquare-style check-in rows.
pub fn parse_checkin_tsv<R: Read>(reader: R) -> Result<Vec<RawCheckinRow>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(reader);

    let mut rows = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 7 {
            return Err(parse_err(line, format!("expected 7 fields, found {}", record.len())));
        }
        let user = record[0].trim().to_string();
        let venue = record[1].trim().to_string();
        if user.is_empty() || venue.is_empty() {
            return Err(parse_err(line, "empty user or venue id"));
        }
        // Category (field 2) is intentionally unused.
        let position = LatLon::new(
            coordinate(&record[3], "lat", line)?,
            coordinate(&record[4], "lon", line)?,
        );
        if !position.in_bounds() {
            return Err(parse_err(
                line,
                format!("coordinates out of bounds: {} {}", position.lat, position.lon),
            ));
        }
        record[5]
            .trim()
            .parse::<i32>()
            .map_err(|_| parse_err(line, format!("invalid tz offset '{}'", &record[5])))?;
        let time = DateTime::parse_from_str(record[6].trim(), CHECKIN_TIME_FORMAT)
            .map_err(|e| parse_err(line, format!("invalid utc_time '{}': {e}", &record[6])))?
            .timestamp();
        rows.push(RawCheckinRow { user, venue, position, time });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_gps_csv() {
        let input = "user_id,lat,lon,timestamp\nu1,40.7,-74.0,1000\nu2,35.6,139.7,2000\n";
        let points = parse_gps_csv(input.as_bytes()).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].user_id, "u1");
        assert_eq!(points[1].timestamp, 2000);
    }

    #[test]
    fn rejects_wrong_header() {
        let input = "user,latitude,lon,timestamp\nu1,40.7,-74.0,1000\n";
        match parse_gps_csv(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected a header error, got {other:?}"),
        }
    }

    #[test]
    fn reports_the_offending_line() {
        let input = "user_id,lat,lon,timestamp\nu1,40.7,-74.0,1000\nu1,not-a-number,-74.0,2000\n";
        match parse_gps_csv(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_bounds_coordinates() {
        let input = "user_id,lat,lon,timestamp\nu1,95.0,-74.0,1000\n";
        assert!(matches!(parse_gps_csv(input.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn parses_foursquare_checkin_rows() {
        let input = "u1\tv42\tBar\t40.7\t-74.0\t-240\tTue Apr 03 18:00:09 +0000 2012\n";
        let rows = parse_checkin_tsv(input.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].user, "u1");
        assert_eq!(rows[0].venue, "v42");
        // 2012-04-03T18:00:09Z
        assert_eq!(rows[0].time, 1333476009);
    }

    #[test]
    fn rejects_malformed_checkin_time() {
        let input = "u1\tv42\tBar\t40.7\t-74.0\t-240\tnot a date\n";
        assert!(matches!(parse_checkin_tsv(input.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
