use serde::{Deserialize, Serialize};

use super::{
    IndicatorCatalog, IndicatorError, IndicatorValue, Kci, KciRequirement, Kri, Measurement, Result,
};
use crate::time::Timestamp;

pub const DEFAULT_RECENCY_DAYS: i64 = 90;

/// Which KRI measurements count as current: everything since the last
/// model-weight change, or the trailing `fallback_days` when no change is
/// recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecencyWindow {
    pub now: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_changed_at: Option<Timestamp>,
    pub fallback_days: i64,
}

impl RecencyWindow {
    pub fn at(now: Timestamp) -> Self {
        RecencyWindow {
            now,
            weights_changed_at: None,
            fallback_days: DEFAULT_RECENCY_DAYS,
        }
    }

    pub fn start(&self) -> Timestamp {
        self.weights_changed_at
            .unwrap_or_else(|| self.now.plus_days(-self.fallback_days))
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start()
    }
}

/// Upper-bound KRI value: the maximum over the recency window, where
/// measurements taken without post-training enhancements are raised by
/// `margin`, clamped to the scale maximum.
pub fn effective_kri_value(
    kri: &Kri,
    history: &[Measurement],
    margin: f64,
    window: &RecencyWindow,
) -> Result<f64> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(IndicatorError::InvalidIndicator {
            indicator: kri.id.clone(),
            reason: format!("enhancement margin {margin} must be nonnegative"),
        });
    }
    history
        .iter()
        .filter(|m| m.indicator_id == kri.id && window.contains(m.timestamp))
        .filter_map(|m| match m.value {
            IndicatorValue::Number(v) => Some(if m.includes_enhancements() {
                v
            } else {
                v + margin
            }),
            IndicatorValue::Level(_) => None,
        })
        .reduce(f64::max)
        .map(|v| v.min(kri.scale.hi))
        .ok_or_else(|| IndicatorError::NoMeasurements(kri.id.clone()))
}

fn latest<'m>(id: &str, measurements: &'m [Measurement]) -> Option<&'m Measurement> {
    // Ties on timestamp go to the later record.
    measurements
        .iter()
        .enumerate()
        .filter(|(_, m)| m.indicator_id == id)
        .max_by_key(|(i, m)| (m.timestamp, *i))
        .map(|(_, m)| m)
}

/// Level index of the most recent KCI measurement, if any.
pub fn current_kci_level(kci: &Kci, measurements: &[Measurement]) -> Result<Option<usize>> {
    latest(&kci.id, measurements)
        .map(|m| kci.level_of(&m.value))
        .transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleState {
    NotTriggered,
    Satisfied,
    Breached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredAction {
    /// Development stops until controls meet the requirement.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleStatus {
    pub rule_id: String,
    pub kri_triggered: bool,
    pub kci_met: bool,
    pub state: RuleState,
    pub evaluated_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kri_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kci_value: Option<IndicatorValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_action: Option<RequiredAction>,
}

impl RuleStatus {
    pub fn from_flags(rule_id: &str, triggered: bool, met: bool, at: Timestamp) -> Self {
        let state = match (triggered, met) {
            (false, _) => RuleState::NotTriggered,
            (true, true) => RuleState::Satisfied,
            (true, false) => RuleState::Breached,
        };
        RuleStatus {
            rule_id: rule_id.to_string(),
            kri_triggered: triggered,
            kci_met: met,
            state,
            evaluated_at: at,
            kri_value: None,
            kci_value: None,
            required_action: (state == RuleState::Breached).then_some(RequiredAction::Hold),
        }
    }
}

/// Request for governance to open an escalation on a breached rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationRequest {
    pub rule_id: String,
    pub raised_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvaluation {
    pub statuses: Vec<RuleStatus>,
    pub escalations: Vec<EscalationRequest>,
}

impl RuleEvaluation {
    pub fn breached(&self) -> impl Iterator<Item = &RuleStatus> {
        self.statuses
            .iter()
            .filter(|s| s.state == RuleState::Breached)
    }
}

fn requirement_met(kci: &Kci, required: &KciRequirement, value: &IndicatorValue) -> Result<bool> {
    match required {
        KciRequirement::Level { level } => Ok(kci.level_of(value)? >= kci.level_index(level)?),
        KciRequirement::AtMost { bound } => match value {
            IndicatorValue::Number(v) => {
                kci.level_of(value)?;
                Ok(*v <= *bound)
            }
            IndicatorValue::Level(_) => Ok(kci.level_of(value)? >= 1),
        },
    }
}

/// Evaluates every rule of the catalog. A rule is triggered when the
/// effective KRI value is at or above its threshold; a KRI without
/// measurements in the window does not trigger.
pub fn evaluate_rules(
    catalog: &IndicatorCatalog,
    measurements: &[Measurement],
    margin: f64,
    window: &RecencyWindow,
) -> Result<RuleEvaluation> {
    let mut statuses = Vec::with_capacity(catalog.rules.len());
    let mut escalations = Vec::new();
    for rule in &catalog.rules {
        let kri = catalog.kri(&rule.kri_id)?;
        let kci = catalog.kci(&rule.kci_id)?;
        let kri_value = match effective_kri_value(kri, measurements, margin, window) {
            Ok(v) => Some(v),
            Err(IndicatorError::NoMeasurements(_)) => None,
            Err(e) => return Err(e),
        };
        let triggered = kri_value.is_some_and(|v| v >= rule.kri_threshold);
        let current = latest(&kci.id, measurements);
        let met = match current {
            Some(m) => requirement_met(kci, &rule.required, &m.value)?,
            None if triggered => {
                return Err(IndicatorError::MissingKciMeasurement {
                    rule: rule.id.clone(),
                    kci: kci.id.clone(),
                })
            }
            None => false,
        };
        let mut status = RuleStatus::from_flags(&rule.id, triggered, met, window.now);
        status.kri_value = kri_value;
        status.kci_value = current.map(|m| m.value.clone());
        if status.state == RuleState::Breached {
            escalations.push(EscalationRequest {
                rule_id: rule.id.clone(),
                raised_at: window.now,
            });
        }
        statuses.push(status);
    }
    Ok(RuleEvaluation {
        statuses,
        escalations,
    })
}
