//! Key risk indicators (KRIs), key control indicators (KCIs) and the
//! if-then rules pairing them.
//!
//! A KRI is a measurable proxy for risk (a benchmark score, an incident
//! count) with thresholds; a KCI measures how well a mitigation works (an
//! ordinal security level, a jailbreak rate). A rule says: once the KRI
//! reaches its threshold, the KCI must meet its required level.

mod context;
mod elicitation;
mod forecast;
mod rules;
mod schedule;
mod solve;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::riskmodel::RiskModelError;
use crate::time::Timestamp;

pub use context::IndicatorContext;
pub use elicitation::{aggregate_elicitation, ElicitationSummary, Estimate, DISAGREEMENT_IQR};
pub use forecast::{
    capability_points, fit_scaling, forecast_crossing, Crossing, Forecast, ScalingFit,
};
pub use rules::{
    current_kci_level, effective_kri_value, evaluate_rules, EscalationRequest, RecencyWindow,
    RequiredAction, RuleEvaluation, RuleState, RuleStatus, DEFAULT_RECENCY_DAYS,
};
pub use schedule::{due_evaluations, EvaluationSchedule, LastEvaluation};
pub use solve::{solve_max_kri, solve_min_kci, MaxKri, MinKci, ThreeWay};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("unknown indicator `{0}`")]
    UnknownIndicator(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("indicator `{indicator}` is invalid: {reason}")]
    InvalidIndicator { indicator: String, reason: String },
    #[error("probability table of `{0}` is not monotone")]
    NonMonotoneTable(String),
    #[error("indicator `{0}` has no probability table")]
    MissingTable(String),
    #[error("rule `{rule}` is invalid: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("KCI `{kci}` has no level `{level}`")]
    UnknownLevel { kci: String, level: String },
    #[error("value {value} outside the scale of `{indicator}`")]
    ValueOutOfScale { indicator: String, value: String },
    #[error("no measurements for `{0}`")]
    NoMeasurements(String),
    #[error("rule `{rule}` is triggered but KCI `{kci}` has no measurement")]
    MissingKciMeasurement { rule: String, kci: String },
    #[error("chain `{chain}` does not have exactly one KRI-table and one KCI-table step; name them explicitly")]
    AmbiguousIndicators { chain: String },
    #[error("need at least two distinct compute points, got {0}")]
    InsufficientData(usize),
    #[error("need at least 3 estimates, got {0}")]
    TooFewEstimates(usize),
    #[error("estimate from `{expert}` is invalid: {reason}")]
    InvalidEstimate { expert: String, reason: String },
    #[error("schedule is invalid: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Model(#[from] RiskModelError),
}

pub type Result<T, E = IndicatorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KriKind {
    InternalCapability,
    ExternalEnvironment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskDirection {
    #[default]
    HigherIsRiskier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KriScale {
    pub unit: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub direction: RiskDirection,
}

/// Step probability by KRI value over half-open bins `[edges[i], edges[i+1])`;
/// values at or above the last edge use the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KriProbabilityTable {
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Elicitation or measurement basis for the numbers.
    #[serde(default)]
    pub provenance: String,
}

impl KriProbabilityTable {
    pub fn bin_of(&self, value: f64) -> usize {
        self.edges.iter().rposition(|&e| e <= value).unwrap_or(0)
    }

    pub fn lookup(&self, value: f64) -> f64 {
        self.probabilities[self.bin_of(value)]
    }

    pub fn is_monotone(&self) -> bool {
        self.probabilities.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kri {
    pub id: String,
    pub name: String,
    pub kind: KriKind,
    pub scale: KriScale,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<KriProbabilityTable>,
}

impl Kri {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| IndicatorError::InvalidIndicator {
            indicator: self.id.clone(),
            reason,
        };
        let s = &self.scale;
        if !(s.lo.is_finite() && s.hi.is_finite() && s.lo < s.hi) {
            return Err(invalid(format!("scale [{}, {}] is empty", s.lo, s.hi)));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("thresholds must be strictly increasing".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(s.lo..=s.hi).contains(*t)) {
            return Err(invalid(format!("threshold {t} outside the scale")));
        }
        if let Some(table) = &self.table {
            if table.edges.is_empty() || table.edges.len() != table.probabilities.len() {
                return Err(invalid("table needs one probability per bin edge".into()));
            }
            if table.edges[0] != s.lo {
                return Err(invalid(
                    "first bin edge must equal the scale minimum".into(),
                ));
            }
            if !table.edges.windows(2).all(|w| w[0] < w[1]) || *table.edges.last().unwrap() >= s.hi
            {
                return Err(invalid(
                    "bin edges must increase strictly and stay below the scale maximum".into(),
                ));
            }
            if table.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid("table probabilities must lie in [0, 1]".into()));
            }
            if !table.is_monotone() {
                return Err(IndicatorError::NonMonotoneTable(self.id.clone()));
            }
        }
        Ok(())
    }

    pub fn check_value(&self, value: f64) -> Result<()> {
        if value.is_finite() && (self.scale.lo..=self.scale.hi).contains(&value) {
            Ok(())
        } else {
            Err(IndicatorError::ValueOutOfScale {
                indicator: self.id.clone(),
                value: value.to_string(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationType {
    /// Controls on access to the model (e.g. security levels).
    Containment,
    /// Controls on use of the model (e.g. jailbreak resistance).
    Deployment,
    /// Affirmative safety evidence.
    Assurance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KciMetric {
    /// Levels from weakest to strongest.
    OrderedLevels { levels: Vec<String> },
    /// A measured quantity where lower is better; the control meets its
    /// target when the value is at most `bound`.
    Continuous {
        unit: String,
        lo: f64,
        hi: f64,
        bound: f64,
    },
}

pub const CONTINUOUS_LEVELS: [&str; 2] = ["fails", "meets"];

/// Step probability per KCI level, weakest level first. Continuous KCIs use
/// two entries: `[fails, meets]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KciProbabilityTable {
    pub probabilities: Vec<f64>,
    #[serde(default)]
    pub provenance: String,
}

impl KciProbabilityTable {
    pub fn is_monotone(&self) -> bool {
        self.probabilities.windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kci {
    pub id: String,
    pub name: String,
    pub mitigation_type: MitigationType,
    pub metric: KciMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<KciProbabilityTable>,
}

impl Kci {
    pub fn level_names(&self) -> Vec<&str> {
        match &self.metric {
            KciMetric::OrderedLevels { levels } => levels.iter().map(String::as_str).collect(),
            KciMetric::Continuous { .. } => CONTINUOUS_LEVELS.to_vec(),
        }
    }

    pub fn level_count(&self) -> usize {
        match &self.metric {
            KciMetric::OrderedLevels { levels } => levels.len(),
            KciMetric::Continuous { .. } => 2,
        }
    }

    pub fn level_index(&self, name: &str) -> Result<usize> {
        self.level_names()
            .iter()
            .position(|l| *l == name)
            .ok_or_else(|| IndicatorError::UnknownLevel {
                kci: self.id.clone(),
                level: name.to_string(),
            })
    }

    /// Level index of a measured value.
    pub fn level_of(&self, value: &IndicatorValue) -> Result<usize> {
        match (&self.metric, value) {
            (KciMetric::OrderedLevels { .. }, IndicatorValue::Level(name)) => {
                self.level_index(name)
            }
            (KciMetric::Continuous { lo, hi, bound, .. }, IndicatorValue::Number(v)) => {
                if !(v.is_finite() && (*lo..=*hi).contains(v)) {
                    return Err(IndicatorError::ValueOutOfScale {
                        indicator: self.id.clone(),
                        value: v.to_string(),
                    });
                }
                Ok(usize::from(*v <= *bound))
            }
            (KciMetric::Continuous { .. }, IndicatorValue::Level(name)) => self.level_index(name),
            (KciMetric::OrderedLevels { .. }, IndicatorValue::Number(v)) => {
                Err(IndicatorError::ValueOutOfScale {
                    indicator: self.id.clone(),
                    value: v.to_string(),
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| IndicatorError::InvalidIndicator {
            indicator: self.id.clone(),
            reason: reason.to_string(),
        };
        match &self.metric {
            KciMetric::OrderedLevels { levels } => {
                if levels.len() < 2 {
                    return Err(invalid("needs at least two levels"));
                }
                if levels.iter().collect::<BTreeSet<_>>().len() != levels.len() {
                    return Err(invalid("level names must be unique"));
                }
            }
            KciMetric::Continuous { lo, hi, bound, .. } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi && (*lo..=*hi).contains(bound)) {
                    return Err(invalid(
                        "continuous metric needs lo < hi and bound within [lo, hi]",
                    ));
                }
            }
        }
        if let Some(table) = &self.table {
            if table.probabilities.len() != self.level_count() {
                return Err(invalid("table needs one probability per level"));
            }
            if table.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid("table probabilities must lie in [0, 1]"));
            }
            if !table.is_monotone() {
                return Err(IndicatorError::NonMonotoneTable(self.id.clone()));
            }
        }
        Ok(())
    }
}

/// What a triggered rule demands of its KCI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KciRequirement {
    /// At least this level (ordinal KCIs).
    Level { level: String },
    /// At most this value (continuous KCIs).
    AtMost { bound: f64 },
}

impl fmt::Display for KciRequirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KciRequirement::Level { level } => write!(f, ">= {level}"),
            KciRequirement::AtMost { bound } => write!(f, "<= {bound}"),
        }
    }
}

/// If the KRI reaches `kri_threshold`, the KCI must satisfy `required`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfThenRule {
    pub id: String,
    pub kri_id: String,
    pub kri_threshold: f64,
    pub kci_id: String,
    pub required: KciRequirement,
    /// Risk model whose residual rate the pair keeps within tolerance.
    pub linked_model: String,
    /// Budget domain the model's residual counts against.
    pub tolerance_ref: String,
}

/// A measured indicator value: a number on a scale or a named KCI level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndicatorValue {
    Number(f64),
    Level(String),
}

impl fmt::Display for IndicatorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndicatorValue::Number(v) => write!(f, "{v}"),
            IndicatorValue::Level(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elicitation {
    #[serde(default)]
    pub method_notes: String,
    /// 1 (light) to 3 (extensive).
    pub effort_tier: u8,
    pub includes_posttraining_enhancements: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub indicator_id: String,
    pub value: IndicatorValue,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elicitation: Option<Elicitation>,
    /// Training compute (FLOP) of the evaluated model, for capability KRIs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_compute: Option<f64>,
}

impl Measurement {
    pub fn number(indicator_id: &str, value: f64, timestamp: Timestamp) -> Self {
        Measurement {
            indicator_id: indicator_id.into(),
            value: IndicatorValue::Number(value),
            timestamp,
            elicitation: None,
            effective_compute: None,
        }
    }

    pub fn level(indicator_id: &str, level: &str, timestamp: Timestamp) -> Self {
        Measurement {
            indicator_id: indicator_id.into(),
            value: IndicatorValue::Level(level.into()),
            timestamp,
            elicitation: None,
            effective_compute: None,
        }
    }

    pub fn includes_enhancements(&self) -> bool {
        self.elicitation
            .as_ref()
            .is_some_and(|e| e.includes_posttraining_enhancements)
    }
}

/// All indicator and rule definitions of one register.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCatalog {
    #[serde(default)]
    pub kris: Vec<Kri>,
    #[serde(default)]
    pub kcis: Vec<Kci>,
    #[serde(default)]
    pub rules: Vec<IfThenRule>,
}

impl IndicatorCatalog {
    pub fn kri(&self, id: &str) -> Result<&Kri> {
        self.kris
            .iter()
            .find(|k| k.id == id)
            .ok_or_else(|| IndicatorError::UnknownIndicator(id.to_string()))
    }

    pub fn kci(&self, id: &str) -> Result<&Kci> {
        self.kcis
            .iter()
            .find(|k| k.id == id)
            .ok_or_else(|| IndicatorError::UnknownIndicator(id.to_string()))
    }

    pub fn rule(&self, id: &str) -> Option<&IfThenRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for id in self
            .kris
            .iter()
            .map(|k| &k.id)
            .chain(self.kcis.iter().map(|k| &k.id))
        {
            if !ids.insert(id.as_str()) {
                return Err(IndicatorError::DuplicateId(id.clone()));
            }
        }
        self.kris.iter().try_for_each(Kri::validate)?;
        self.kcis.iter().try_for_each(Kci::validate)?;
        let mut rule_ids = BTreeSet::new();
        for rule in &self.rules {
            if !rule_ids.insert(rule.id.as_str()) {
                return Err(IndicatorError::DuplicateId(rule.id.clone()));
            }
            self.validate_rule(rule)?;
        }
        Ok(())
    }

    pub fn validate_rule(&self, rule: &IfThenRule) -> Result<()> {
        let invalid = |reason: String| IndicatorError::InvalidRule {
            rule: rule.id.clone(),
            reason,
        };
        let kri = self.kri(&rule.kri_id)?;
        let kci = self.kci(&rule.kci_id)?;
        if !(kri.scale.lo..=kri.scale.hi).contains(&rule.kri_threshold) {
            return Err(invalid(format!(
                "threshold {} outside the KRI scale",
                rule.kri_threshold
            )));
        }
        match (&rule.required, &kci.metric) {
            (KciRequirement::Level { level }, KciMetric::OrderedLevels { .. }) => {
                kci.level_index(level)?;
            }
            (KciRequirement::AtMost { bound }, KciMetric::Continuous { lo, hi, .. }) => {
                if !(*lo..=*hi).contains(bound) {
                    return Err(invalid(format!("bound {bound} outside the KCI range")));
                }
            }
            _ => return Err(invalid("requirement does not match the KCI metric".into())),
        }
        Ok(())
    }

    /// Validates a measurement against the indicator it names.
    pub fn check_measurement(&self, m: &Measurement) -> Result<()> {
        if let Ok(kri) = self.kri(&m.indicator_id) {
            return match m.value {
                IndicatorValue::Number(v) => kri.check_value(v),
                IndicatorValue::Level(ref l) => Err(IndicatorError::ValueOutOfScale {
                    indicator: kri.id.clone(),
                    value: l.clone(),
                }),
            };
        }
        let kci = self.kci(&m.indicator_id)?;
        kci.level_of(&m.value).map(|_| ())
    }
}
