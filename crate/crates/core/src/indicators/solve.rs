//! The three-way relationship between risk tolerance, KRI value and KCI
//! level: fixing any two determines the third.

use serde::{Deserialize, Serialize};

use super::{IndicatorCatalog, IndicatorContext, IndicatorError, Kci, Kri, Result};
use crate::riskmodel::{chain_residual_rate, RiskModelError, ScenarioChain};

/// Weakest KCI level that keeps the chain within tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum MinKci {
    Level {
        index: usize,
        name: String,
        rate: f64,
    },
    Infeasible,
}

/// Highest KRI value the tolerance admits at a given KCI level: the upper
/// edge of the last passing bin, or the scale maximum if every bin passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum MaxKri {
    Edge { value: f64 },
    NoneAdmissible,
}

/// A scenario chain with one KRI-driven step and one KCI-driven step.
/// Any other table-driven steps resolve through the base context.
#[derive(Debug, Clone)]
pub struct ThreeWay<'a> {
    chain: &'a ScenarioChain,
    kri: &'a Kri,
    kci: &'a Kci,
    base: IndicatorContext<'a>,
}

impl<'a> ThreeWay<'a> {
    /// Infers the indicator pair from the chain's table-driven steps.
    pub fn new(chain: &'a ScenarioChain, catalog: &'a IndicatorCatalog) -> Result<Self> {
        let kris: Vec<&str> = chain.kri_ids().collect();
        let kcis: Vec<&str> = chain.kci_ids().collect();
        match (kris.as_slice(), kcis.as_slice()) {
            ([kri], [kci]) => {
                Self::with_indicators(chain, kri, kci, IndicatorContext::new(catalog))
            }
            _ => Err(IndicatorError::AmbiguousIndicators {
                chain: chain.id.clone(),
            }),
        }
    }

    pub fn with_indicators(
        chain: &'a ScenarioChain,
        kri_id: &str,
        kci_id: &str,
        base: IndicatorContext<'a>,
    ) -> Result<Self> {
        chain.validate()?;
        let catalog = base.catalog();
        let kri = catalog.kri(kri_id)?;
        let kci = catalog.kci(kci_id)?;
        let kri_table = kri
            .table
            .as_ref()
            .ok_or_else(|| IndicatorError::MissingTable(kri.id.clone()))?;
        if !kri_table.is_monotone() {
            return Err(IndicatorError::NonMonotoneTable(kri.id.clone()));
        }
        let kci_table = kci
            .table
            .as_ref()
            .ok_or_else(|| IndicatorError::MissingTable(kci.id.clone()))?;
        if !kci_table.is_monotone() {
            return Err(IndicatorError::NonMonotoneTable(kci.id.clone()));
        }
        Ok(ThreeWay {
            chain,
            kri,
            kci,
            base,
        })
    }

    pub fn kri(&self) -> &Kri {
        self.kri
    }

    pub fn kci(&self) -> &Kci {
        self.kci
    }

    /// Residual rate of the chain at a KRI value and KCI level index.
    pub fn rate(&self, kri_value: f64, level: usize) -> Result<f64> {
        self.kri.check_value(kri_value)?;
        let mut ctx = self.base.clone();
        ctx.kri_values.insert(self.kri.id.clone(), kri_value);
        ctx.set_kci_index(&self.kci.id, level);
        Ok(chain_residual_rate(self.chain, &ctx)?.rate)
    }

    pub fn min_kci(&self, tolerance: f64, kri_value: f64) -> Result<MinKci> {
        check_tolerance(tolerance)?;
        for (index, name) in self.kci.level_names().into_iter().enumerate() {
            let rate = self.rate(kri_value, index)?;
            if rate <= tolerance {
                return Ok(MinKci::Level {
                    index,
                    name: name.to_string(),
                    rate,
                });
            }
        }
        Ok(MinKci::Infeasible)
    }

    pub fn max_kri(&self, tolerance: f64, level: &str) -> Result<MaxKri> {
        check_tolerance(tolerance)?;
        let level = self.kci.level_index(level)?;
        let edges = &self
            .kri
            .table
            .as_ref()
            .expect("checked in constructor")
            .edges;
        for (bin, &lo) in edges.iter().enumerate() {
            if self.rate(lo, level)? > tolerance {
                return Ok(if bin == 0 {
                    MaxKri::NoneAdmissible
                } else {
                    MaxKri::Edge { value: lo }
                });
            }
        }
        Ok(MaxKri::Edge {
            value: self.kri.scale.hi,
        })
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if tolerance.is_finite() && tolerance >= 0.0 {
        Ok(())
    } else {
        Err(RiskModelError::InvalidRate {
            id: "tolerance".into(),
            value: tolerance,
        }
        .into())
    }
}

pub fn solve_min_kci(
    chain: &ScenarioChain,
    catalog: &IndicatorCatalog,
    tolerance: f64,
    kri_value: f64,
) -> Result<MinKci> {
    ThreeWay::new(chain, catalog)?.min_kci(tolerance, kri_value)
}

pub fn solve_max_kri(
    chain: &ScenarioChain,
    catalog: &IndicatorCatalog,
    tolerance: f64,
    level: &str,
) -> Result<MaxKri> {
    ThreeWay::new(chain, catalog)?.max_kri(tolerance, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn min(t: f64, k: f64) -> MinKci {
        solve_min_kci(&fixtures::cyber1_chain(), &fixtures::cyber1_catalog(), t, k).unwrap()
    }

    fn max(t: f64, level: &str) -> MaxKri {
        solve_max_kri(
            &fixtures::cyber1_chain(),
            &fixtures::cyber1_catalog(),
            t,
            level,
        )
        .unwrap()
    }

    #[test]
    fn min_kci_examples() {
        assert_eq!(
            min(0.006, 60.0),
            MinKci::Level {
                index: 2,
                name: "L3".into(),
                rate: 0.005
            }
        );
        assert_eq!(
            min(0.006, 30.0),
            MinKci::Level {
                index: 0,
                name: "L1".into(),
                rate: 0.005
            }
        );
        assert_eq!(min(1e-9, 60.0), MinKci::Infeasible);
    }

    #[test]
    fn max_kri_examples() {
        assert_eq!(max(0.006, "L3"), MaxKri::Edge { value: 100.0 });
        // 40-60 bin at L2: 2 * 0.2 * 0.2 * 0.1 = 0.008 > 0.006.
        assert_eq!(max(0.006, "L2"), MaxKri::Edge { value: 40.0 });
        assert_eq!(max(1e-9, "L4"), MaxKri::NoneAdmissible);
    }

    #[test]
    fn ambiguous_chain_rejected() {
        let mut chain = fixtures::cyber1_chain();
        chain.steps[2].source = crate::riskmodel::ProbabilitySource::KriTable {
            kri_id: fixtures::CYBENCH.into(),
        };
        assert!(matches!(
            ThreeWay::new(&chain, &fixtures::cyber1_catalog()),
            Err(IndicatorError::AmbiguousIndicators { .. })
        ));
    }

    #[test]
    fn non_monotone_table_rejected() {
        let mut cat = fixtures::cyber1_catalog();
        cat.kcis[0].table.as_mut().unwrap().probabilities = vec![0.5, 0.6, 0.05, 0.01];
        assert_eq!(
            solve_min_kci(&fixtures::cyber1_chain(), &cat, 0.006, 60.0),
            Err(IndicatorError::NonMonotoneTable(
                fixtures::SECURITY_LEVEL.into()
            ))
        );
    }
}
