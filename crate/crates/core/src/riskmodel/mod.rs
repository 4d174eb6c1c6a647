//! Risk models: scenario chains, fault trees and event trees.
//!
//! All quantities are rates in expected harm events per year. Basic events
//! and scenario steps are mutually independent; dependence has to be modeled
//! structurally, e.g. by sharing a basic event between fault-tree gates.

mod chain;
mod event_tree;
mod fault_tree;
mod monte_carlo;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use chain::{
    chain_residual_rate, step_probabilities, ProbabilitySource, ScenarioChain, ScenarioStep,
    StepResolver,
};
pub use event_tree::{
    eval_event_tree, BranchOutcome, BranchPoint, EventTree, EventTreeLeaf, EventTreeQuantification,
    InitiatingEvent, LeafRisk,
};
pub use fault_tree::{
    eval_fault_tree, minimal_cut_sets, BasicEvent, CutSet, FaultTree, FaultTreeModel, Gate,
    GateKind, Likelihood,
};
pub use monte_carlo::{monte_carlo_rate, Distribution, MonteCarloResult, UncertainModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RiskModelError {
    #[error("fault tree contains a cycle through `{node}`")]
    CyclicTree { node: String },
    #[error("unknown event id `{id}`")]
    UnknownEventId { id: String },
    #[error("duplicate id `{id}`")]
    DuplicateId { id: String },
    #[error("gate `{gate}` is invalid: {reason}")]
    InvalidGate { gate: String, reason: String },
    #[error("basic event `{id}` carries a rate; fault trees need per-demand probabilities")]
    RateInFaultTree { id: String },
    #[error("`{id}` has probability {value} outside [0, 1]")]
    InvalidProbability { id: String, value: f64 },
    #[error("`{id}` has invalid rate {value}")]
    InvalidRate { id: String, value: f64 },
    #[error("branch point {branch_point} outcome probabilities sum to {sum}, expected 1")]
    BranchProbabilitySumError { branch_point: usize, sum: f64 },
    #[error("event tree is malformed: {reason}")]
    MalformedEventTree { reason: String },
    #[error("scenario chain `{chain}` has no steps")]
    EmptyChain { chain: String },
    #[error("step `{step}` cannot be resolved: no value for indicator `{indicator}`")]
    UnresolvedStep { step: String, indicator: String },
    #[error("invalid severity: {reason}")]
    InvalidSeverity { reason: String },
    #[error("invalid distribution for `{id}`: {reason}")]
    InvalidDistribution { id: String, reason: String },
    #[error("sample count must be at least 1")]
    NoSamples,
}

pub type Result<T, E = RiskModelError> = std::result::Result<T, E>;

/// Harm severity, either a quantified loss or a named scenario outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Severity {
    Quantitative { magnitude: f64, unit: String },
    Qualitative { scenario_label: String },
}

impl Severity {
    pub fn usd(magnitude: f64) -> Self {
        Severity::Quantitative {
            magnitude,
            unit: "USD".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Severity::Quantitative { magnitude, unit } => {
                if !(magnitude.is_finite() && *magnitude > 0.0) {
                    return Err(RiskModelError::InvalidSeverity {
                        reason: format!("magnitude {magnitude} must be positive"),
                    });
                }
                if unit.is_empty() {
                    return Err(RiskModelError::InvalidSeverity {
                        reason: "unit is empty".into(),
                    });
                }
            }
            Severity::Qualitative { scenario_label } => {
                if scenario_label.is_empty() {
                    return Err(RiskModelError::InvalidSeverity {
                        reason: "scenario label is empty".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Key under which rates of the same severity class are aggregated.
    pub fn class_key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Quantitative { magnitude, unit } => write!(f, "{magnitude} {unit}"),
            Severity::Qualitative { scenario_label } => f.write_str(scenario_label),
        }
    }
}

/// A harm rate attached to its severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifiedRisk {
    /// Expected harm events per year.
    pub rate: f64,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<(f64, f64)>,
}

impl QuantifiedRisk {
    pub fn point(rate: f64, severity: Severity) -> Self {
        QuantifiedRisk {
            rate,
            severity,
            ci95: None,
        }
    }
}

/// Any quantifiable harm pathway the register can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RiskModel {
    ScenarioChain(ScenarioChain),
    FaultTree(FaultTreeModel),
    EventTree(EventTree),
}

impl RiskModel {
    pub fn id(&self) -> &str {
        match self {
            RiskModel::ScenarioChain(c) => &c.id,
            RiskModel::FaultTree(m) => &m.id,
            RiskModel::EventTree(t) => &t.id,
        }
    }

    pub fn severity(&self) -> Option<&Severity> {
        match self {
            RiskModel::ScenarioChain(c) => Some(&c.severity),
            RiskModel::FaultTree(m) => Some(&m.severity),
            RiskModel::EventTree(t) => t.worst_severity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RiskModel::ScenarioChain(c) => c.validate(),
            RiskModel::FaultTree(m) => m.validate(),
            RiskModel::EventTree(t) => t.validate(),
        }
    }

    /// Harm rate under the given indicator context. Fault and event trees
    /// do not depend on indicators and ignore the resolver.
    pub fn quantify(&self, resolver: &dyn StepResolver) -> Result<QuantifiedRisk> {
        match self {
            RiskModel::ScenarioChain(c) => chain_residual_rate(c, resolver),
            RiskModel::FaultTree(m) => m.quantify(None),
            RiskModel::EventTree(t) => t.quantify(),
        }
    }

    pub fn as_chain(&self) -> Option<&ScenarioChain> {
        match self {
            RiskModel::ScenarioChain(c) => Some(c),
            _ => None,
        }
    }
}

pub(crate) fn check_probability(id: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RiskModelError::InvalidProbability {
            id: id.to_string(),
            value,
        })
    }
}

pub(crate) fn check_rate(id: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(RiskModelError::InvalidRate {
            id: id.to_string(),
            value,
        })
    }
}
