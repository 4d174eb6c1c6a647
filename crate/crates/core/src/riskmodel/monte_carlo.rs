//! Seeded uncertainty propagation for elicited probabilities and frequencies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _, LogNormal, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use super::chain::{ProbabilitySource, ScenarioChain, StepResolver};
use super::fault_tree::{CompiledTree, FaultTreeModel};
use super::{QuantifiedRisk, Result, RiskModelError, Severity};
use crate::numeric::{decimal_product, quantile_sorted};

/// Bootstrap resamples used for the interval on the mean.
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Uncertainty over one model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Point {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Triangular {
        lo: f64,
        mode: f64,
        hi: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// Parameters of the underlying normal; frequencies only.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

#[derive(Clone, Copy, PartialEq)]
enum Target {
    Probability,
    Frequency,
}

enum Sampler {
    Point(f64),
    Uniform(Uniform<f64>),
    Triangular(Triangular<f64>),
    Beta(Beta<f64>),
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Point(v) => *v,
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Triangular(d) => d.sample(rng),
            Sampler::Beta(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
        }
    }
}

impl Distribution {
    fn sampler(&self, id: &str, target: Target) -> Result<Sampler> {
        let invalid = |reason: &str| RiskModelError::InvalidDistribution {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        let upper = match target {
            Target::Probability => 1.0,
            Target::Frequency => f64::INFINITY,
        };
        let in_range = |v: f64| v.is_finite() && v >= 0.0 && v <= upper;
        match *self {
            Distribution::Point { value } => {
                if !in_range(value) {
                    return Err(invalid("point value out of range"));
                }
                Ok(Sampler::Point(value))
            }
            Distribution::Uniform { lo, hi } => {
                if !(in_range(lo) && in_range(hi) && lo <= hi) {
                    return Err(invalid(
                        "uniform bounds must satisfy 0 <= lo <= hi (<= 1 for probabilities)",
                    ));
                }
                if lo == hi {
                    return Ok(Sampler::Point(lo));
                }
                Uniform::new_inclusive(lo, hi)
                    .map(Sampler::Uniform)
                    .map_err(|e| invalid(&e.to_string()))
            }
            Distribution::Triangular { lo, mode, hi } => {
                if !(in_range(lo) && in_range(hi) && lo <= mode && mode <= hi) {
                    return Err(invalid(
                        "triangular needs 0 <= lo <= mode <= hi (<= 1 for probabilities)",
                    ));
                }
                if lo == hi {
                    return Ok(Sampler::Point(lo));
                }
                Triangular::new(lo, hi, mode)
                    .map(Sampler::Triangular)
                    .map_err(|e| invalid(&e.to_string()))
            }
            Distribution::Beta { alpha, beta } => {
                if target != Target::Probability {
                    return Err(invalid("beta applies to probabilities only"));
                }
                if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
                    return Err(invalid("beta shape parameters must be positive"));
                }
                Beta::new(alpha, beta)
                    .map(Sampler::Beta)
                    .map_err(|e| invalid(&e.to_string()))
            }
            Distribution::LogNormal { mu, sigma } => {
                if target != Target::Frequency {
                    return Err(invalid("lognormal applies to frequencies only"));
                }
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return Err(invalid("lognormal needs finite mu and sigma >= 0"));
                }
                if sigma == 0.0 {
                    return Ok(Sampler::Point(mu.exp()));
                }
                LogNormal::new(mu, sigma)
                    .map(Sampler::LogNormal)
                    .map_err(|e| invalid(&e.to_string()))
            }
        }
    }
}

/// Model whose inputs are sampled. Uncertainty keys name scenario steps or
/// basic events; the model's own id keys its initiating/demand frequency.
#[derive(Clone, Copy)]
pub enum UncertainModel<'a> {
    Chain {
        chain: &'a ScenarioChain,
        resolver: &'a dyn StepResolver,
    },
    FaultTree(&'a FaultTreeModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    /// Mean rate with a percentile-bootstrap 95% interval on that mean.
    pub risk: QuantifiedRisk,
    /// 2.5th and 97.5th percentiles of the sampled rates.
    pub spread95: (f64, f64),
    pub samples: usize,
}

/// Mean harm rate over `n` seeded draws.
///
/// Identical `(model, uncertainty, n, seed)` give bit-identical results.
pub fn monte_carlo_rate(
    model: UncertainModel<'_>,
    uncertainty: &BTreeMap<String, Distribution>,
    n: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    if n == 0 {
        return Err(RiskModelError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rates, severity) = match model {
        UncertainModel::Chain { chain, resolver } => (
            sample_chain(chain, resolver, uncertainty, n, &mut rng)?,
            chain.severity.clone(),
        ),
        UncertainModel::FaultTree(m) => (
            sample_tree(m, uncertainty, n, &mut rng)?,
            m.severity.clone(),
        ),
    };
    Ok(summarize(rates, severity, seed))
}

fn sample_chain(
    chain: &ScenarioChain,
    resolver: &dyn StepResolver,
    uncertainty: &BTreeMap<String, Distribution>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    chain.validate()?;
    // slot 0: initiating frequency, slot i + 1: step i
    let mut base = vec![Some(chain.initiating_frequency)];
    for step in &chain.steps {
        base.push(match &step.source {
            ProbabilitySource::Fixed { probability } => Some(*probability),
            ProbabilitySource::KriTable { kri_id } => resolver.kri_probability(kri_id),
            ProbabilitySource::KciTable { kci_id } => resolver.kci_probability(kci_id),
        });
    }
    let mut samplers = Vec::new();
    for (key, dist) in uncertainty {
        if *key == chain.id {
            samplers.push((0, dist.sampler(key, Target::Frequency)?));
        } else if let Some(i) = chain.steps.iter().position(|s| s.id == *key) {
            samplers.push((i + 1, dist.sampler(key, Target::Probability)?));
        } else {
            return Err(RiskModelError::InvalidDistribution {
                id: key.clone(),
                reason: "no such step or frequency in the model".into(),
            });
        }
    }
    for (slot, value) in base.iter().enumerate() {
        if value.is_none() && !samplers.iter().any(|(s, _)| *s == slot) {
            let step = &chain.steps[slot - 1];
            let indicator = match &step.source {
                ProbabilitySource::KriTable { kri_id } => kri_id.clone(),
                ProbabilitySource::KciTable { kci_id } => kci_id.clone(),
                ProbabilitySource::Fixed { .. } => String::new(),
            };
            return Err(RiskModelError::UnresolvedStep {
                step: step.id.clone(),
                indicator,
            });
        }
    }
    let mut factors: Vec<f64> = base.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut rates = Vec::with_capacity(n);
    for _ in 0..n {
        for (slot, sampler) in &samplers {
            factors[*slot] = sampler.sample(rng);
        }
        rates.push(decimal_product(&factors));
    }
    Ok(rates)
}

fn sample_tree(
    model: &FaultTreeModel,
    uncertainty: &BTreeMap<String, Distribution>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    model.validate()?;
    let compiled = CompiledTree::compile(&model.tree)?;
    let mut freq_sampler = None;
    let mut samplers = Vec::new();
    for (key, dist) in uncertainty {
        if *key == model.id {
            freq_sampler = Some(dist.sampler(key, Target::Frequency)?);
        } else if let Some(i) = compiled.event_ids.iter().position(|e| e == key) {
            samplers.push((i, dist.sampler(key, Target::Probability)?));
        } else {
            return Err(RiskModelError::InvalidDistribution {
                id: key.clone(),
                reason: "no such basic event or frequency in the model".into(),
            });
        }
    }
    let mut probs = compiled.probabilities.clone();
    let mut rates = Vec::with_capacity(n);
    for _ in 0..n {
        let freq = match &freq_sampler {
            Some(s) => s.sample(rng),
            None => model.demand_frequency,
        };
        for (i, sampler) in &samplers {
            probs[*i] = sampler.sample(rng);
        }
        let p = compiled.top_probability(&probs);
        rates.push(decimal_product(&[freq, p]));
    }
    Ok(rates)
}

/// Running mean; exact when every value is identical.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, x) in values.enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

fn summarize(mut rates: Vec<f64>, severity: Severity, seed: u64) -> MonteCarloResult {
    let n = rates.len();
    let mean_rate = mean(rates.iter().copied());

    let mut boot_rng = ChaCha8Rng::seed_from_u64(seed);
    boot_rng.set_stream(1);
    let mut boot_means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let m = mean((0..n).map(|_| rates[boot_rng.random_range(0..n)]));
        boot_means.push(m);
    }
    boot_means.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&boot_means, 0.025).min(mean_rate);
    let hi = quantile_sorted(&boot_means, 0.975).max(mean_rate);

    rates.sort_by(f64::total_cmp);
    let spread95 = (
        quantile_sorted(&rates, 0.025),
        quantile_sorted(&rates, 0.975),
    );

    MonteCarloResult {
        risk: QuantifiedRisk {
            rate: mean_rate,
            severity,
            ci95: Some((lo, hi)),
        },
        spread95,
        samples: n,
    }
}
