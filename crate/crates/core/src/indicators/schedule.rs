use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{IndicatorError, Result};
use crate::time::{Timestamp, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastEvaluation {
    pub compute: f64,
    pub date: Timestamp,
}

/// Re-evaluate a capability KRI when training compute has grown by
/// `compute_growth_factor` or `max_interval_days` have passed, whichever
/// comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSchedule {
    pub compute_growth_factor: f64,
    pub max_interval_days: u32,
    #[serde(default)]
    pub last_evaluated: BTreeMap<String, LastEvaluation>,
}

impl Default for EvaluationSchedule {
    fn default() -> Self {
        EvaluationSchedule {
            compute_growth_factor: 4.0,
            max_interval_days: 180,
            last_evaluated: BTreeMap::new(),
        }
    }
}

impl EvaluationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_growth_factor.is_finite() && self.compute_growth_factor > 1.0) {
            return Err(IndicatorError::InvalidSchedule(format!(
                "compute growth factor {} must exceed 1",
                self.compute_growth_factor
            )));
        }
        if self.max_interval_days < 1 {
            return Err(IndicatorError::InvalidSchedule(
                "interval must be at least one day".into(),
            ));
        }
        Ok(())
    }

    pub fn record_evaluation(&mut self, kri_id: &str, compute: f64, date: Timestamp) {
        self.last_evaluated
            .insert(kri_id.to_string(), LastEvaluation { compute, date });
    }

    pub fn is_due(&self, kri_id: &str, now: Timestamp, current_compute: Option<f64>) -> bool {
        let Some(last) = self.last_evaluated.get(kri_id) else {
            return true;
        };
        let grown = current_compute.is_some_and(|c| c / last.compute >= self.compute_growth_factor);
        let elapsed = now.0 - last.date.0 >= i64::from(self.max_interval_days) * SECONDS_PER_DAY;
        grown || elapsed
    }
}

/// KRIs due for evaluation, in id order. Every KRI named in either the
/// schedule or `current_compute` is considered.
pub fn due_evaluations(
    schedule: &EvaluationSchedule,
    now: Timestamp,
    current_compute: &BTreeMap<String, f64>,
) -> Result<Vec<String>> {
    schedule.validate()?;
    let ids: BTreeSet<&String> = schedule
        .last_evaluated
        .keys()
        .chain(current_compute.keys())
        .collect();
    Ok(ids
        .into_iter()
        .filter(|id| schedule.is_due(id, now, current_compute.get(*id).copied()))
        .cloned()
        .collect())
}
