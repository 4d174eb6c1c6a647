use std::collections::BTreeMap;

use super::rules::{current_kci_level, effective_kri_value, RecencyWindow};
use super::{IndicatorCatalog, IndicatorValue, Measurement, Result};
use crate::riskmodel::StepResolver;

/// Current KRI values and KCI levels, resolved against the catalog's tables.
#[derive(Debug, Clone)]
pub struct IndicatorContext<'a> {
    catalog: &'a IndicatorCatalog,
    pub kri_values: BTreeMap<String, f64>,
    /// KCI level indices, weakest = 0.
    pub kci_levels: BTreeMap<String, usize>,
}

impl<'a> IndicatorContext<'a> {
    pub fn new(catalog: &'a IndicatorCatalog) -> Self {
        IndicatorContext {
            catalog,
            kri_values: BTreeMap::new(),
            kci_levels: BTreeMap::new(),
        }
    }

    pub fn catalog(&self) -> &'a IndicatorCatalog {
        self.catalog
    }

    /// Effective KRI values and latest KCI levels from a measurement history.
    /// Indicators without measurements are left unset.
    pub fn from_measurements(
        catalog: &'a IndicatorCatalog,
        measurements: &[Measurement],
        margin: f64,
        window: &RecencyWindow,
    ) -> Result<Self> {
        let mut ctx = IndicatorContext::new(catalog);
        for kri in &catalog.kris {
            if let Ok(v) = effective_kri_value(kri, measurements, margin, window) {
                ctx.kri_values.insert(kri.id.clone(), v);
            }
        }
        for kci in &catalog.kcis {
            if let Some(level) = current_kci_level(kci, measurements)? {
                ctx.kci_levels.insert(kci.id.clone(), level);
            }
        }
        Ok(ctx)
    }

    pub fn set_kri(&mut self, id: &str, value: f64) -> Result<()> {
        self.catalog.kri(id)?.check_value(value)?;
        self.kri_values.insert(id.to_string(), value);
        Ok(())
    }

    pub fn set_kci(&mut self, id: &str, value: &IndicatorValue) -> Result<()> {
        let level = self.catalog.kci(id)?.level_of(value)?;
        self.kci_levels.insert(id.to_string(), level);
        Ok(())
    }

    pub fn set_kci_index(&mut self, id: &str, level: usize) {
        self.kci_levels.insert(id.to_string(), level);
    }

    pub fn with_kri(mut self, id: &str, value: f64) -> Result<Self> {
        self.set_kri(id, value)?;
        Ok(self)
    }

    pub fn with_kci_level(mut self, id: &str, level: &str) -> Result<Self> {
        self.set_kci(id, &IndicatorValue::Level(level.to_string()))?;
        Ok(self)
    }
}

impl StepResolver for IndicatorContext<'_> {
    fn kri_probability(&self, kri_id: &str) -> Option<f64> {
        let value = *self.kri_values.get(kri_id)?;
        let table = self.catalog.kri(kri_id).ok()?.table.as_ref()?;
        Some(table.lookup(value))
    }

    fn kci_probability(&self, kci_id: &str) -> Option<f64> {
        let level = *self.kci_levels.get(kci_id)?;
        let table = self.catalog.kci(kci_id).ok()?.table.as_ref()?;
        table.probabilities.get(level).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, CYBENCH, SECURITY_LEVEL};
    use crate::riskmodel::chain_residual_rate;

    fn rate(cybench: f64, level: &str) -> f64 {
        let cat = fixtures::cyber1_catalog();
        let ctx = IndicatorContext::new(&cat)
            .with_kri(CYBENCH, cybench)
            .unwrap()
            .with_kci_level(SECURITY_LEVEL, level)
            .unwrap();
        chain_residual_rate(&fixtures::cyber1_chain(), &ctx)
            .unwrap()
            .rate
    }

    #[test]
    fn cyber1_worked_example() {
        assert_eq!(rate(60.0, "L3"), 0.005);
        assert_eq!(rate(60.0, "L2"), 0.02);
        assert_eq!(rate(60.0, "L4"), 0.001);
        assert_eq!(rate(60.0, "L1"), 0.05);
        assert_eq!(rate(30.0, "L1"), 0.005);
    }

    #[test]
    fn out_of_scale_override_rejected() {
        let cat = fixtures::cyber1_catalog();
        assert!(IndicatorContext::new(&cat)
            .with_kri(CYBENCH, 140.0)
            .is_err());
        assert!(IndicatorContext::new(&cat)
            .with_kci_level(SECURITY_LEVEL, "L5")
            .is_err());
    }
}
