//! Risk tolerance, time-base conversion and the risk budget ledger.
//!
//! Rates across domains are aggregated additively (a union bound). Every
//! compliance report carries that assumption in its `assumptions` list.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numeric::{exact_sum, sum_exceeds};
use crate::riskmodel::{QuantifiedRisk, Severity};

pub const HOURS_PER_YEAR: f64 = 8760.0;

pub const ADDITIVE_AGGREGATION: &str =
    "rates of distinct risk models and domains are summed (union bound)";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToleranceError {
    #[error("unknown rate unit `{0}`")]
    UnknownUnit(String),
    #[error("rate must be finite and nonnegative, got {0}")]
    NegativeRate(f64),
    #[error("tolerance is invalid: {0}")]
    InvalidTolerance(String),
    #[error("no shares given")]
    EmptyShares,
    #[error("share for `{domain}` must be positive, got {share}")]
    NonPositiveShare { domain: String, share: f64 },
    #[error("allocations sum to {allocated}, above the tolerance of {total}")]
    Oversubscribed { allocated: f64, total: f64 },
    #[error("no residual supplied for domain `{0}`")]
    MissingResidual(String),
}

pub type Result<T, E = ToleranceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    FlightHour,
    PlaneYear,
    Year,
    Month,
}

impl FromStr for RateUnit {
    type Err = ToleranceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flight_hour" => Ok(RateUnit::FlightHour),
            "plane_year" => Ok(RateUnit::PlaneYear),
            "year" => Ok(RateUnit::Year),
            "month" => Ok(RateUnit::Month),
            other => Err(ToleranceError::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for RateUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateUnit::FlightHour => "flight_hour",
            RateUnit::PlaneYear => "plane_year",
            RateUnit::Year => "year",
            RateUnit::Month => "month",
        })
    }
}

/// Converts a rate into events per year.
///
/// A plane-year is one aircraft operated for `hours_per_year` flight hours,
/// so a per-flight-hour rate scales by `hours_per_year` and a per-plane-year
/// rate is already yearly.
pub fn normalize_rate(value: f64, per: RateUnit, hours_per_year: f64) -> Result<f64> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(ToleranceError::NegativeRate(value));
    }
    Ok(match per {
        RateUnit::FlightHour => value * hours_per_year,
        RateUnit::PlaneYear | RateUnit::Year => value,
        RateUnit::Month => value * 12.0,
    })
}

/// Mean years between events for a yearly rate; `None` for a zero rate.
pub fn recurrence_interval_years(rate_per_year: f64) -> Option<f64> {
    (rate_per_year > 0.0).then(|| 1.0 / rate_per_year)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ToleranceForm {
    /// At most `max_rate` events per year at or above `severity_floor`.
    Quantitative {
        max_rate: f64,
        severity_floor: Severity,
    },
    /// At most `max_rate` occurrences per year of the named scenario.
    ScenarioBounded {
        scenario_label: String,
        max_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTolerance {
    #[serde(flatten)]
    pub form: ToleranceForm,
    /// Where the number comes from.
    #[serde(default)]
    pub basis_note: String,
}

impl RiskTolerance {
    pub fn quantitative(max_rate: f64, severity_floor: Severity, basis_note: &str) -> Result<Self> {
        let t = RiskTolerance {
            form: ToleranceForm::Quantitative {
                max_rate,
                severity_floor,
            },
            basis_note: basis_note.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn max_rate(&self) -> f64 {
        match &self.form {
            ToleranceForm::Quantitative { max_rate, .. } => *max_rate,
            ToleranceForm::ScenarioBounded { max_rate, .. } => *max_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = self.max_rate();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ToleranceError::InvalidTolerance(format!(
                "max_rate {rate} must be positive"
            )));
        }
        match &self.form {
            ToleranceForm::Quantitative { severity_floor, .. } => match severity_floor {
                Severity::Quantitative { .. } => severity_floor
                    .validate()
                    .map_err(|e| ToleranceError::InvalidTolerance(e.to_string())),
                Severity::Qualitative { .. } => Err(ToleranceError::InvalidTolerance(
                    "quantitative tolerance needs a quantitative severity floor".into(),
                )),
            },
            ToleranceForm::ScenarioBounded { scenario_label, .. } if scenario_label.is_empty() => {
                Err(ToleranceError::InvalidTolerance(
                    "scenario label is empty".into(),
                ))
            }
            ToleranceForm::ScenarioBounded { .. } => Ok(()),
        }
    }

    /// Whether a model with this severity counts against the tolerance.
    /// Scenario-bounded forms match labels exactly; quantitative forms match
    /// magnitudes at or above the floor in the same unit.
    pub fn applies_to(&self, severity: &Severity) -> bool {
        match (&self.form, severity) {
            (
                ToleranceForm::ScenarioBounded { scenario_label, .. },
                Severity::Qualitative { scenario_label: l },
            ) => scenario_label == l,
            (
                ToleranceForm::Quantitative {
                    severity_floor:
                        Severity::Quantitative {
                            magnitude: floor,
                            unit: fu,
                        },
                    ..
                },
                Severity::Quantitative { magnitude, unit },
            ) => unit == fu && magnitude >= floor,
            _ => false,
        }
    }
}

/// Allocation of a tolerance across risk domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: RiskTolerance,
    pub allocations: BTreeMap<String, f64>,
    #[serde(default)]
    pub rationale: BTreeMap<String, String>,
}

impl BudgetLedger {
    pub fn allocated(&self) -> f64 {
        exact_sum(self.allocations.values().copied())
    }

    pub fn validate(&self) -> Result<()> {
        self.total.validate()?;
        check_shares(self.total.max_rate(), &self.allocations)
    }

    /// Replaces the allocations, keeping the ledger untouched on error.
    pub fn reallocate(&mut self, shares: BTreeMap<String, f64>) -> Result<()> {
        check_shares(self.total.max_rate(), &shares)?;
        self.rationale.retain(|k, _| shares.contains_key(k));
        self.allocations = shares;
        Ok(())
    }
}

fn check_shares(total: f64, shares: &BTreeMap<String, f64>) -> Result<()> {
    if shares.is_empty() {
        return Err(ToleranceError::EmptyShares);
    }
    for (domain, &share) in shares {
        if !(share.is_finite() && share > 0.0) {
            return Err(ToleranceError::NonPositiveShare {
                domain: domain.clone(),
                share,
            });
        }
    }
    if sum_exceeds(shares.values().copied(), total) {
        let allocated = exact_sum(shares.values().copied());
        return Err(ToleranceError::Oversubscribed { allocated, total });
    }
    Ok(())
}

/// Builds a ledger, rejecting empty, nonpositive or oversubscribed shares.
pub fn allocate_budget(
    total: RiskTolerance,
    shares: BTreeMap<String, f64>,
) -> Result<BudgetLedger> {
    total.validate()?;
    check_shares(total.max_rate(), &shares)?;
    Ok(BudgetLedger {
        total,
        allocations: shares,
        rationale: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCompliance {
    pub allocated: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub per_domain: BTreeMap<String, DomainCompliance>,
    pub aggregate_residual: f64,
    pub total: f64,
    pub pass: bool,
    pub assumptions: Vec<String>,
}

/// Compares residual rates with their allocations.
///
/// Residuals for domains without an allocation are reported with an
/// allocation of zero and therefore fail unless their rate is zero.
pub fn check_compliance(
    ledger: &BudgetLedger,
    residuals: &BTreeMap<String, QuantifiedRisk>,
) -> Result<ComplianceReport> {
    if let Some(missing) = ledger
        .allocations
        .keys()
        .find(|d| !residuals.contains_key(*d))
    {
        return Err(ToleranceError::MissingResidual(missing.clone()));
    }
    let per_domain: BTreeMap<String, DomainCompliance> = residuals
        .iter()
        .map(|(domain, risk)| {
            let allocated = ledger.allocations.get(domain).copied().unwrap_or(0.0);
            (
                domain.clone(),
                DomainCompliance {
                    allocated,
                    residual: risk.rate,
                    pass: risk.rate <= allocated,
                },
            )
        })
        .collect();
    let aggregate_residual = exact_sum(residuals.values().map(|r| r.rate));
    let total = ledger.total.max_rate();
    let pass = per_domain.values().all(|d| d.pass)
        && !sum_exceeds(residuals.values().map(|r| r.rate), total);
    Ok(ComplianceReport {
        per_domain,
        aggregate_residual,
        total,
        pass,
        assumptions: vec![ADDITIVE_AGGREGATION.to_string()],
    })
}
