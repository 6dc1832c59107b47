//! Model-ready check-in data: the dataset container, its on-disk format,
//! and the transforms that produce training samples from it.

mod io;
mod relations;
mod session;
mod split;

pub use io::{parse_checkin_tsv, parse_gps_csv, RawCheckinRow};
pub use relations::{build_relation_matrices, Normalizers, RelationMatrices};
pub use session::{filter_dataset, sessionize, Event, FilterRules};
pub use split::{
    build_splits, split_long_short, split_user, SampleRef, SplitKind, SplitSet, TrajectorySplit,
};

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::LatLon;

const DATASET_MAGIC: &str = "nextpoi-dataset";
const DATASET_VERSION: u32 = 1;

/// One visit event: who, where, when, and for how long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    /// Dense user index into [`Dataset::user_ids`].
    pub user: u32,
    /// Dense location id into [`Dataset::locations`].
    pub location: u32,
    /// Seconds since the Unix epoch.
    pub time: i64,
    /// Activity duration in seconds.
    pub duration: i64,
    /// Centroid of the visited location, kept inline for distance work.
    pub position: LatLon,
}

/// A location surviving filtering: dense id plus centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub id: u32,
    pub position: LatLon,
}

/// The preprocessed dataset as written by `preprocess` and consumed by
/// training and evaluation. Serialized as a single JSON document with a
/// magic/version header and self-describing counts, all validated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    format: String,
    version: u32,
    pub user_count: usize,
    pub location_count: usize,
    pub checkin_count: usize,
    /// Dense user index to original identifier.
    pub user_ids: Vec<String>,
    pub locations: Vec<LocationRecord>,
    /// Per-user check-ins, time-sorted.
    pub checkins: Vec<Vec<CheckIn>>,
}

impl Dataset {
    pub fn new(
        user_ids: Vec<String>,
        locations: Vec<LocationRecord>,
        checkins: Vec<Vec<CheckIn>>,
    ) -> Self {
        let checkin_count = checkins.iter().map(Vec::len).sum();
        Self {
            format: DATASET_MAGIC.to_string(),
            version: DATASET_VERSION,
            user_count: user_ids.len(),
            location_count: locations.len(),
            checkin_count,
            user_ids,
            locations,
            checkins,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let ds: Dataset = serde_json::from_slice(&bytes)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    /// SHA-256 over the serialized form; stored in checkpoints so a model
    /// can be matched back to the data it was trained on.
    pub fn fingerprint(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        let digest = Sha256::digest(&bytes);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.format != DATASET_MAGIC {
            return Err(Error::Format(format!(
                "expected {DATASET_MAGIC}, found {}",
                self.format
            )));
        }
        if self.version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {}",
                self.version
            )));
        }
        if self.user_count != self.user_ids.len()
            || self.user_count != self.checkins.len()
            || self.location_count != self.locations.len()
            || self.checkin_count != self.checkins.iter().map(Vec::len).sum::<usize>()
        {
            return Err(Error::Format("dataset counts do not match payload".into()));
        }
        for per_user in &self.checkins {
            for c in per_user {
                if c.location as usize >= self.location_count {
                    return Err(Error::Format(format!(
                        "check-in references location {} out of {}",
                        c.location, self.location_count
                    )));
                }
            }
            if per_user.windows(2).any(|w| w[0].time >= w[1].time) {
                return Err(Error::Format("check-ins must be strictly time-sorted".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> Dataset {
        let locations = vec![
            LocationRecord {
                id: 0,
                position: LatLon::new(40.0, -74.0),
            },
            LocationRecord {
                id: 1,
                position: LatLon::new(40.01, -74.0),
            },
        ];
        let checkins = vec![vec![
            CheckIn {
                user: 0,
                location: 0,
                time: 1000,
                duration: 600,
                position: locations[0].position,
            },
            CheckIn {
                user: 0,
                location: 1,
                time: 5000,
                duration: 900,
                position: locations[1].position,
            },
        ]];
        Dataset::new(vec!["alice".into()], locations, checkins)
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        ds.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(ds.to_bytes().unwrap(), loaded.to_bytes().unwrap());
        assert_eq!(ds.fingerprint().unwrap(), loaded.fingerprint().unwrap());
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut ds = tiny_dataset();
        ds.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        std::fs::write(&path, ds.to_bytes().unwrap()).unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let mut ds = tiny_dataset();
        ds.checkin_count = 7;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        std::fs::write(&path, ds.to_bytes().unwrap()).unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn unsorted_checkins_are_rejected() {
        let mut ds = tiny_dataset();
        ds.checkins[0].swap(0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        std::fs::write(&path, ds.to_bytes().unwrap()).unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Format(_))));
    }
}
