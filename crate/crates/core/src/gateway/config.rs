use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::{from_canonical, to_canonical, SchemaViolation};
use crate::governance::Governance;
use crate::indicators::{EvaluationSchedule, DEFAULT_RECENCY_DAYS};

use super::{GatewayError, Result};

pub const CONFIG_FILE: &str = "config.json";

pub const MAX_ENHANCEMENT_MARGIN: f64 = 1e6;
pub const MAX_GROWTH_FACTOR: f64 = 1e3;
pub const MAX_INTERVAL_DAYS: u32 = 3650;
pub const MAX_RECENCY_DAYS: i64 = 3650;

/// Defaults for the capability re-evaluation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDefaults {
    /// In (1, 1000].
    pub compute_growth_factor: f64,
    /// In [1, 3650].
    pub max_interval_days: u32,
}

impl Default for ScheduleDefaults {
    fn default() -> Self {
        let s = EvaluationSchedule::default();
        ScheduleDefaults {
            compute_growth_factor: s.compute_growth_factor,
            max_interval_days: s.max_interval_days,
        }
    }
}

/// Engine configuration, stored as a canonical document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Store directory. Relative paths resolve against the config file.
    #[serde(default = "default_store")]
    pub store: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Added to KRI measurements taken without post-training
    /// enhancements. In [0, 1e6], in the KRI's own units.
    #[serde(default)]
    pub enhancement_margin: f64,
    /// Trailing window for current KRI values when no weight change is
    /// recorded. In [1, 3650].
    #[serde(default = "default_recency")]
    pub recency_days: i64,
    #[serde(default)]
    pub schedule: ScheduleDefaults,
    #[serde(default)]
    pub governance: Governance,
}

fn default_store() -> PathBuf {
    PathBuf::from(".")
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_recency() -> i64 {
    DEFAULT_RECENCY_DAYS
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store: default_store(),
            listen: default_listen(),
            enhancement_margin: 0.0,
            recency_days: default_recency(),
            schedule: ScheduleDefaults::default(),
            governance: Governance::default(),
        }
    }
}

fn out_of_range(path: &str, message: String) -> GatewayError {
    GatewayError::Config(SchemaViolation {
        path: path.into(),
        message,
    })
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let m = self.enhancement_margin;
        if !(m.is_finite() && (0.0..=MAX_ENHANCEMENT_MARGIN).contains(&m)) {
            return Err(out_of_range(
                ".enhancement_margin",
                format!("{m} is outside [0, {MAX_ENHANCEMENT_MARGIN}]"),
            ));
        }
        if !(1..=MAX_RECENCY_DAYS).contains(&self.recency_days) {
            return Err(out_of_range(
                ".recency_days",
                format!("{} is outside [1, {MAX_RECENCY_DAYS}]", self.recency_days),
            ));
        }
        let g = self.schedule.compute_growth_factor;
        if !(g.is_finite() && g > 1.0 && g <= MAX_GROWTH_FACTOR) {
            return Err(out_of_range(
                ".schedule.compute_growth_factor",
                format!("{g} is outside (1, {MAX_GROWTH_FACTOR}]"),
            ));
        }
        if !(1..=MAX_INTERVAL_DAYS).contains(&self.schedule.max_interval_days) {
            return Err(out_of_range(
                ".schedule.max_interval_days",
                format!(
                    "{} is outside [1, {MAX_INTERVAL_DAYS}]",
                    self.schedule.max_interval_days
                ),
            ));
        }
        if self.listen.trim().is_empty() {
            return Err(out_of_range(".listen", "listen address is empty".into()));
        }
        self.governance
            .validate()
            .map_err(|e| out_of_range(".governance", e.to_string()))
    }

    pub fn parse(bytes: &[u8]) -> Result<Config> {
        let config: Config = from_canonical(bytes).map_err(GatewayError::Config)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file; a relative `store` is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let bytes = std::fs::read(path).map_err(|e| GatewayError::io(path, e))?;
        let mut config = Config::parse(&bytes)?;
        if config.store.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.store = base.join(&config.store);
        }
        Ok(config)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical(self)
    }

    pub fn schedule(&self) -> EvaluationSchedule {
        EvaluationSchedule {
            compute_growth_factor: self.schedule.compute_growth_factor,
            max_interval_days: self.schedule.max_interval_days,
            ..EvaluationSchedule::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(Config::parse(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(Config::parse(b"{}").unwrap(), Config::default());
    }

    #[test]
    fn unknown_key_reported_with_path() {
        let err = Config::parse(
            br#"{"schedule":{"compute_growth_factor":4,"max_interval_days":10,"jitter":1}}"#,
        )
        .unwrap_err();
        let GatewayError::Config(v) = err else {
            panic!("{err:?}")
        };
        assert_eq!(v.path, ".schedule.jitter");

        let err = Config::parse(
            br#"{"governance":{"roles":[{"id":"a","kind":"cro","person":"p","x":1}]}}"#,
        )
        .unwrap_err();
        let GatewayError::Config(v) = err else {
            panic!("{err:?}")
        };
        assert_eq!(v.path, ".governance.roles[0].x");
    }

    #[test]
    fn ranges_checked() {
        for (doc, path) in [
            (r#"{"enhancement_margin":-1}"#, ".enhancement_margin"),
            (r#"{"recency_days":0}"#, ".recency_days"),
            (
                r#"{"schedule":{"compute_growth_factor":1,"max_interval_days":10}}"#,
                ".schedule.compute_growth_factor",
            ),
            (
                r#"{"schedule":{"compute_growth_factor":4,"max_interval_days":0}}"#,
                ".schedule.max_interval_days",
            ),
        ] {
            match Config::parse(doc.as_bytes()) {
                Err(GatewayError::Config(v)) => assert_eq!(v.path, path, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }
}
