use serde::{Deserialize, Serialize};

use super::{check_probability, check_rate, QuantifiedRisk, Result, RiskModelError, Severity};
use crate::numeric::decimal_product;

/// Where a scenario step gets its conditional probability from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbabilitySource {
    Fixed {
        probability: f64,
    },
    /// Looked up in the named KRI's probability table at its current value.
    KriTable {
        kri_id: String,
    },
    /// Looked up in the named KCI's probability table at its current level.
    KciTable {
        kci_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub source: ProbabilitySource,
}

/// A harm pathway broken into sequential steps, each conditional on the
/// previous ones succeeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioChain {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Attempts per year.
    pub initiating_frequency: f64,
    pub steps: Vec<ScenarioStep>,
    pub severity: Severity,
}

impl ScenarioChain {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(RiskModelError::EmptyChain {
                chain: self.id.clone(),
            });
        }
        check_rate(&self.id, self.initiating_frequency)?;
        self.severity.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for step in &self.steps {
            if !ids.insert(step.id.as_str()) || step.id == self.id {
                return Err(RiskModelError::DuplicateId {
                    id: step.id.clone(),
                });
            }
            if let ProbabilitySource::Fixed { probability } = step.source {
                check_probability(&step.id, probability)?;
            }
        }
        Ok(())
    }

    pub fn kri_ids(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match &s.source {
            ProbabilitySource::KriTable { kri_id } => Some(kri_id.as_str()),
            _ => None,
        })
    }

    pub fn kci_ids(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match &s.source {
            ProbabilitySource::KciTable { kci_id } => Some(kci_id.as_str()),
            _ => None,
        })
    }
}

/// Resolves table-sourced step probabilities against current indicator values.
pub trait StepResolver {
    fn kri_probability(&self, kri_id: &str) -> Option<f64>;
    fn kci_probability(&self, kci_id: &str) -> Option<f64>;
}

/// Resolver with no indicator context; only fixed steps resolve.
impl StepResolver for () {
    fn kri_probability(&self, _: &str) -> Option<f64> {
        None
    }
    fn kci_probability(&self, _: &str) -> Option<f64> {
        None
    }
}

/// Conditional probability of every step, in order.
pub fn step_probabilities(chain: &ScenarioChain, resolver: &dyn StepResolver) -> Result<Vec<f64>> {
    chain
        .steps
        .iter()
        .map(|step| {
            let (p, indicator) = match &step.source {
                ProbabilitySource::Fixed { probability } => (Some(*probability), ""),
                ProbabilitySource::KriTable { kri_id } => {
                    (resolver.kri_probability(kri_id), kri_id.as_str())
                }
                ProbabilitySource::KciTable { kci_id } => {
                    (resolver.kci_probability(kci_id), kci_id.as_str())
                }
            };
            let p = p.ok_or_else(|| RiskModelError::UnresolvedStep {
                step: step.id.clone(),
                indicator: indicator.to_string(),
            })?;
            check_probability(&step.id, p)?;
            Ok(p)
        })
        .collect()
}

/// Residual harm rate: initiating frequency × product of step probabilities.
pub fn chain_residual_rate(
    chain: &ScenarioChain,
    resolver: &dyn StepResolver,
) -> Result<QuantifiedRisk> {
    chain.validate()?;
    let mut factors = step_probabilities(chain, resolver)?;
    factors.insert(0, chain.initiating_frequency);
    Ok(QuantifiedRisk::point(
        decimal_product(&factors),
        chain.severity.clone(),
    ))
}
