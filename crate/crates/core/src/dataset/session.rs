//! Sessionization and iterative dataset filtering.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// A visit event before dense re-indexing: the location id is whatever the
/// upstream stage produced (cluster id or venue index).
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub location: u32,
    pub time: i64,
    pub duration: i64,
    pub position: LatLon,
}

/// Splits a time-sorted sequence into sessions. A new session starts
/// whenever the gap from the current session's first event exceeds
/// `window` seconds.
pub fn sessionize(events: &[Event], window: i64) -> Vec<Vec<Event>> {
    let mut sessions: Vec<Vec<Event>> = Vec::new();
    for event in events {
        match sessions.last_mut() {
            Some(session) if event.time - session[0].time <= window => {
                session.push(event.clone());
            }
            _ => sessions.push(vec![event.clone()]),
        }
    }
    sessions
}

/// Thresholds for [`filter_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct FilterRules {
    /// A location needs at least this many visits across all users.
    pub min_location_visits: usize,
    /// A session needs at least this many check-ins.
    pub min_session_len: usize,
    /// A user needs at least this many sessions.
    pub min_user_sessions: usize,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            min_location_visits: 5,
            min_session_len: 3,
            min_user_sessions: 3,
        }
    }
}

/// Applies the three removal rules to a fixed point: drop under-visited
/// locations, then short sessions, then inactive users, repeating while
/// anything changed. Location ids are NOT re-indexed here; callers re-index
/// once after filtering.
pub fn filter_dataset(
    mut users: Vec<(String, Vec<Vec<Event>>)>,
    rules: FilterRules,
) -> Result<Vec<(String, Vec<Vec<Event>>)>> {
    loop {
        let mut changed = false;

        let mut visits: HashMap<u32, usize> = HashMap::new();
        for (_, sessions) in &users {
            for session in sessions {
                for event in session {
                    *visits.entry(event.location).or_insert(0) += 1;
                }
            }
        }

        for (_, sessions) in users.iter_mut() {
            for session in sessions.iter_mut() {
                let before = session.len();
                session.retain(|e| visits[&e.location] >= rules.min_location_visits);
                changed |= session.len() != before;
            }
            let before = sessions.len();
            sessions.retain(|s| s.len() >= rules.min_session_len);
            changed |= sessions.len() != before;
        }

        let before = users.len();
        users.retain(|(_, sessions)| sessions.len() >= rules.min_user_sessions);
        changed |= users.len() != before;

        if !changed {
            break;
        }
    }

    if users.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(users)
}
