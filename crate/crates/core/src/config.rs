//! Top-level run configuration: one JSON document, every section optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::AugmentConfig;
use crate::confidence::{ConfigError, GatingConfig};
use crate::egomotion::EgoConfig;
use crate::ekf::EkfConfig;
use crate::metrics::MetricOptions;
use crate::protocols::ScheduleConfig;
use crate::trackers::NccConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed for RANSAC, augmentation and synthetic data.
    pub seed: u64,
    /// Seconds to wait for an external tracker response.
    pub tracker_timeout_s: f64,
    pub gating: GatingConfig,
    pub ego: EgoConfig,
    pub ekf: EkfConfig,
    pub schedule: ScheduleConfig,
    pub metrics: MetricOptions,
    pub ncc: NccConfig,
    pub augment: AugmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tracker_timeout_s: 10.0,
            gating: GatingConfig::default(),
            ego: EgoConfig::default(),
            ekf: EkfConfig::default(),
            schedule: ScheduleConfig::default(),
            metrics: MetricOptions::default(),
            ncc: NccConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tracker_timeout_s > 0.0 && self.tracker_timeout_s.is_finite()) {
            return Err(ConfigError::invalid("tracker_timeout_s", "must be positive"));
        }
        self.gating.validate()?;
        self.ego.validate()?;
        self.ekf.validate()?;
        self.schedule.validate()?;
        self.metrics.validate()?;
        self.ncc.validate()?;
        self.augment.validate()
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, LoadError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| LoadError::Parse { path: path.into(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LoadError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Dotted key paths with their default values, e.g. `("schedule.tracker_hz", "10.0")`.
    pub fn documented_keys() -> Vec<(String, String)> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
            match v {
                Value::Object(m) => {
                    for (k, v) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                other => out.push((prefix.to_string(), other.to_string())),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(Self::default()).expect("config serializes"), &mut out);
        out
    }
}
