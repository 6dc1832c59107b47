//! Per-user train/validation/test splits and the long/short partition.

use super::{CheckIn, Dataset};

/// Which split a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// A lightweight sample descriptor: the input is the user's first
/// `input_len` check-ins, the target is the next visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRef {
    pub user: u32,
    pub input_len: usize,
    pub label: u32,
    /// Timestamp of the label check-in; prediction time for this sample.
    pub query_time: i64,
    pub kind: SplitKind,
}

#[derive(Debug, Clone, Default)]
pub struct SplitSet {
    pub train: Vec<SampleRef>,
    pub val: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

/// Splits one user's history of `m` check-ins: `m - 3` training samples
/// (inputs are the prefixes of length 1 to m-3), one validation sample
/// (prefix m-2) and one test sample (prefix m-1). Returns `None` for
/// users with fewer than 4 check-ins.
pub fn split_user(user: u32, checkins: &[CheckIn]) -> Option<SplitSet> {
    let m = checkins.len();
    if m < 4 {
        return None;
    }
    let mut set = SplitSet::default();
    let sample = |input_len: usize, kind: SplitKind| SampleRef {
        user,
        input_len,
        label: checkins[input_len].location,
        query_time: checkins[input_len].time,
        kind,
    };
    for input_len in 1..=(m - 3) {
        set.train.push(sample(input_len, SplitKind::Train));
    }
    set.val.push(sample(m - 2, SplitKind::Val));
    set.test.push(sample(m - 1, SplitKind::Test));
    Some(set)
}

/// Builds all three splits over the dataset, skipping users that are too
/// short to produce a sample.
pub fn build_splits(dataset: &Dataset) -> SplitSet {
    let mut set = SplitSet::default();
    for (user, checkins) in dataset.checkins.iter().enumerate() {
        match split_user(user as u32, checkins) {
            Some(user_set) => {
                set.train.extend(user_set.train);
                set.val.extend(user_set.val);
                set.test.extend(user_set.test);
            }
            None => log::warn!(
                "skipping user {} with only {} check-ins",
                dataset.user_ids[user],
                checkins.len()
            ),
        }
    }
    set
}

/// An input sequence partitioned into its older (long-term) and most
/// recent (short-term) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySplit {
    pub long: Vec<CheckIn>,
    pub short: Vec<CheckIn>,
    pub label: u32,
    pub query_time: i64,
}

/// Fallback length of the short part when the whole input is one session.
const SHORT_FALLBACK_LEN: usize = 10;

/// Truncates the input to its most recent `max_len` check-ins and splits
/// it: the short part is the final session, read backward from the last
/// check-in (every trailing check-in within `session_window` of it), the
/// long part is everything before. If that would leave the long part empty
/// and the input is longer than a handful of check-ins, the last
/// `SHORT_FALLBACK_LEN` become the short part instead.
pub fn split_long_short(
    input: &[CheckIn],
    label: u32,
    query_time: i64,
    max_len: usize,
    session_window: i64,
) -> TrajectorySplit {
    debug_assert!(!input.is_empty());
    let start = input.len().saturating_sub(max_len);
    let input = &input[start..];
    let n = input.len();

    let last_time = input[n - 1].time;
    let mut boundary = n - 1;
    while boundary > 0 && last_time - input[boundary - 1].time <= session_window {
        boundary -= 1;
    }
    if boundary == 0 && n > SHORT_FALLBACK_LEN {
        boundary = n - SHORT_FALLBACK_LEN;
    }

    TrajectorySplit {
        long: input[..boundary].to_vec(),
        short: input[boundary..].to_vec(),
        label,
        query_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use proptest::prelude::*;

    fn checkin(location: u32, time: i64) -> CheckIn {
        CheckIn {
            user: 0,
            location,
            time,
            duration: 0,
            position: LatLon::new(0.0, 0.0),
        }
    }

    #[test]
    fn four_checkins_give_one_of_each() {
        let cs: Vec<CheckIn> = (0..4).map(|k| checkin(k, k as i64 * 1000)).collect();
        let set = split_user(0, &cs).unwrap();
        assert_eq!(set.train.len(), 1);
        assert_eq!(set.val.len(), 1);
        assert_eq!(set.test.len(), 1);
        assert_eq!(set.train[0].input_len, 1);
        assert_eq!(set.train[0].label, 1);
        assert_eq!(set.val[0].input_len, 2);
        assert_eq!(set.val[0].label, 2);
        assert_eq!(set.test[0].input_len, 3);
        assert_eq!(set.test[0].label, 3);
    }

    #[test]
    fn ten_checkins_give_seven_training_samples() {
        let cs: Vec<CheckIn> = (0..10).map(|k| checkin(k, k as i64 * 1000)).collect();
        let set = split_user(0, &cs).unwrap();
        assert_eq!(set.train.len(), 7);
        // Training labels are the visits at positions 2..=m-2 (1-based).
        let labels: Vec<u32> = set.train.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn short_users_are_skipped() {
        let cs: Vec<CheckIn> = (0..3).map(|k| checkin(k, k as i64 * 1000)).collect();
        assert!(split_user(0, &cs).is_none());
    }

    #[test]
    fn single_session_input_goes_entirely_short() {
        let cs: Vec<CheckIn> = (0..5).map(|k| checkin(k, k as i64 * 3600)).collect();
        let split = split_long_short(&cs, 9, 99_999, 100, 86_400);
        assert!(split.long.is_empty());
        assert_eq!(split.short.len(), 5);
    }

    #[test]
    fn final_session_becomes_the_short_part() {
        // 8 check-ins on day 0, then 3 check-ins two days later.
        let mut cs: Vec<CheckIn> = (0..8).map(|k| checkin(k, k as i64 * 3600)).collect();
        for k in 0..3 {
            cs.push(checkin(8 + k, 200_000 + k as i64 * 3600));
        }
        let split = split_long_short(&cs, 0, 300_000, 100, 86_400);
        assert_eq!(split.long.len(), 8);
        assert_eq!(split.short.len(), 3);
    }

    #[test]
    fn long_inputs_are_truncated_to_max_len() {
        let cs: Vec<CheckIn> = (0..150).map(|k| checkin(k % 5, k as i64 * 90_000)).collect();
        let split = split_long_short(&cs, 0, i64::MAX, 100, 86_400);
        assert_eq!(split.long.len() + split.short.len(), 100);
        // The first 50 check-ins are gone.
        let first_kept = split.long.first().unwrap_or(&split.short[0]);
        assert_eq!(first_kept.time, 50 * 90_000);
    }

    #[test]
    fn one_dense_session_longer_than_fallback_splits_at_fallback() {
        let cs: Vec<CheckIn> = (0..15).map(|k| checkin(k, k as i64 * 60)).collect();
        let split = split_long_short(&cs, 0, 1_000_000, 100, 86_400);
        assert_eq!(split.short.len(), 10);
        assert_eq!(split.long.len(), 5);
    }

    proptest! {
        #[test]
        fn concatenation_reproduces_truncated_input(
            times in prop::collection::vec(0i64..3_000_000, 1..140),
            max_len in 1usize..120,
        ) {
            let mut times = times;
            times.sort_unstable();
            let cs: Vec<CheckIn> = times.iter().map(|&t| checkin(0, t)).collect();
            let split = split_long_short(&cs, 0, 3_000_001, max_len, 86_400);
            let mut joined = split.long.clone();
            joined.extend(split.short.clone());
            let start = cs.len().saturating_sub(max_len);
            prop_assert_eq!(joined, cs[start..].to_vec());
            prop_assert!(!split.short.is_empty());
        }

        #[test]
        fn labels_never_precede_inputs(
            times in prop::collection::vec(1i64..1_000_000, 4..40),
        ) {
            let mut times = times;
            times.sort_unstable();
            times.dedup();
            prop_assume!(times.len() >= 4);
            let cs: Vec<CheckIn> = times.iter().map(|&t| checkin(0, t)).collect();
            let set = split_user(0, &cs).unwrap();
            for s in set.train.iter().chain(&set.val).chain(&set.test) {
                for c in &cs[..s.input_len] {
                    prop_assert!(s.query_time > c.time);
                }
            }
        }
    }
}
