//! Layered run configuration: defaults, then an optional TOML file, then
//! command-line flags. Unknown keys in the file are rejected, and every
//! command echoes its fully resolved configuration into the output
//! directory so runs can be reproduced from their artifacts.

use std::path::Path;

use anyhow::{Context, Result};
use nextpoi::dataset::FilterRules;
use nextpoi::pipeline::PreprocessConfig;
use nextpoi::training::TrainConfig;
use serde::{Deserialize, Serialize};

/// The configuration file: every key optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub dist_threshold: Option<f64>,
    pub time_threshold: Option<i64>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub session_window: Option<i64>,
    pub min_location_visits: Option<usize>,
    pub min_session_len: Option<usize>,
    pub min_user_sessions: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub max_len: Option<usize>,
    pub num_negatives: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub duration_buckets: Option<usize>,
    pub session_window: Option<i64>,
    pub clip_norm: Option<f64>,
    pub use_duration: Option<bool>,
    pub use_long_short: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub ks: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }
}

/// Flag overrides for preprocessing, mirrored by the clap arguments.
#[derive(Debug, Clone, Default)]
pub struct PreprocessOverrides {
    pub dist_threshold: Option<f64>,
    pub time_threshold: Option<i64>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub session_window: Option<i64>,
}

pub fn resolve_preprocess(
    file: &PreprocessSection,
    flags: &PreprocessOverrides,
) -> PreprocessConfig {
    let defaults = PreprocessConfig::default();
    let filter_defaults = FilterRules::default();
    PreprocessConfig {
        dist_threshold: flags
            .dist_threshold
            .or(file.dist_threshold)
            .unwrap_or(defaults.dist_threshold),
        time_threshold: flags
            .time_threshold
            .or(file.time_threshold)
            .unwrap_or(defaults.time_threshold),
        eps: flags.eps.or(file.eps).unwrap_or(defaults.eps),
        min_pts: flags.min_pts.or(file.min_pts).unwrap_or(defaults.min_pts),
        session_window: flags
            .session_window
            .or(file.session_window)
            .unwrap_or(defaults.session_window),
        filter: FilterRules {
            min_location_visits: file
                .min_location_visits
                .unwrap_or(filter_defaults.min_location_visits),
            min_session_len: file.min_session_len.unwrap_or(filter_defaults.min_session_len),
            min_user_sessions: file
                .min_user_sessions
                .unwrap_or(filter_defaults.min_user_sessions),
        },
    }
}

/// Flag overrides for training, mirrored by the clap arguments.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub max_len: Option<usize>,
    pub num_negatives: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub no_duration: bool,
    pub no_long_short: bool,
}

pub fn resolve_train(file: &TrainSection, flags: &TrainOverrides) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        dim: flags.dim.or(file.dim).unwrap_or(d.dim),
        learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        dropout: flags.dropout.or(file.dropout).unwrap_or(d.dropout),
        epochs: flags.epochs.or(file.epochs).unwrap_or(d.epochs),
        max_len: flags.max_len.or(file.max_len).unwrap_or(d.max_len),
        num_negatives: flags.num_negatives.or(file.num_negatives).unwrap_or(d.num_negatives),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        base_seed: flags.seed.or(file.seed).unwrap_or(d.base_seed),
        duration_buckets: file.duration_buckets.unwrap_or(d.duration_buckets),
        session_window: file.session_window.unwrap_or(d.session_window),
        clip_norm: file.clip_norm.unwrap_or(d.clip_norm),
        use_duration: if flags.no_duration { false } else { file.use_duration.unwrap_or(true) },
        use_long_short: if flags.no_long_short {
            false
        } else {
            file.use_long_short.unwrap_or(true)
        },
    }
}

/// Fully resolved settings echoed next to each command's outputs.
#[derive(Debug, Serialize)]
pub struct EffectiveConfig<'a, T: Serialize> {
    pub command: &'a str,
    pub settings: &'a T,
}

pub fn echo_config<T: Serialize>(dir: &Path, command: &str, settings: &T) -> Result<()> {
    let effective = EffectiveConfig { command, settings };
    let text = toml::to_string_pretty(&effective).context("serializing effective config")?;
    std::fs::write(dir.join("effective-config.toml"), text)
        .with_context(|| format!("writing effective config into {}", dir.display()))?;
    Ok(())
}

/// Serializable mirror of the preprocess settings for the config echo.
#[derive(Debug, Serialize)]
pub struct PreprocessEcho {
    pub dist_threshold: f64,
    pub time_threshold: i64,
    pub eps: f64,
    pub min_pts: usize,
    pub session_window: i64,
    pub min_location_visits: usize,
    pub min_session_len: usize,
    pub min_user_sessions: usize,
}

impl From<&PreprocessConfig> for PreprocessEcho {
    fn from(c: &PreprocessConfig) -> Self {
        Self {
            dist_threshold: c.dist_threshold,
            time_threshold: c.time_threshold,
            eps: c.eps,
            min_pts: c.min_pts,
            session_window: c.session_window,
            min_location_visits: c.filter.min_location_visits,
            min_session_len: c.filter.min_session_len,
            min_user_sessions: c.filter.min_user_sessions,
        }
    }
}
