use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{IndicatorError, Result};
use crate::numeric::quantile_sorted;

/// Interquartile range above which experts are flagged as disagreeing.
pub const DISAGREEMENT_IQR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub expert_id: String,
    pub probability: f64,
}

/// Quartiles use linear interpolation between order statistics at
/// position `(n - 1) * q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationSummary {
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub disagreement_flag: bool,
}

pub fn aggregate_elicitation(estimates: &[Estimate]) -> Result<ElicitationSummary> {
    if estimates.len() < 3 {
        return Err(IndicatorError::TooFewEstimates(estimates.len()));
    }
    let mut experts = BTreeSet::new();
    for e in estimates {
        if !(0.0..=1.0).contains(&e.probability) {
            return Err(IndicatorError::InvalidEstimate {
                expert: e.expert_id.clone(),
                reason: format!("probability {} outside [0, 1]", e.probability),
            });
        }
        if !experts.insert(e.expert_id.as_str()) {
            return Err(IndicatorError::InvalidEstimate {
                expert: e.expert_id.clone(),
                reason: "more than one estimate from this expert".into(),
            });
        }
    }
    let mut sorted: Vec<f64> = estimates.iter().map(|e| e.probability).collect();
    sorted.sort_by(f64::total_cmp);
    let p25 = quantile_sorted(&sorted, 0.25);
    let p75 = quantile_sorted(&sorted, 0.75);
    Ok(ElicitationSummary {
        n: sorted.len(),
        median: quantile_sorted(&sorted, 0.5),
        p25,
        p75,
        disagreement_flag: p75 - p25 > DISAGREEMENT_IQR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(ps: &[f64]) -> Vec<Estimate> {
        ps.iter()
            .enumerate()
            .map(|(i, p)| Estimate {
                expert_id: format!("e{i}"),
                probability: *p,
            })
            .collect()
    }

    #[test]
    fn examples() {
        let s = aggregate_elicitation(&est(&[0.3, 0.1, 0.2])).unwrap();
        assert_eq!(s.median, 0.2);
        assert!(!s.disagreement_flag);

        let s = aggregate_elicitation(&est(&[0.5, 0.5, 0.5])).unwrap();
        assert_eq!((s.median, s.p25, s.p75), (0.5, 0.5, 0.5));
        assert!(!s.disagreement_flag);

        let s = aggregate_elicitation(&est(&[0.05, 0.5, 0.9])).unwrap();
        assert!(s.disagreement_flag);
    }

    #[test]
    fn even_count_median_interpolates() {
        let s = aggregate_elicitation(&est(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        assert!((s.median - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            aggregate_elicitation(&est(&[0.1, 0.2])),
            Err(IndicatorError::TooFewEstimates(2))
        );
        assert!(aggregate_elicitation(&est(&[0.1, 0.2, 1.2])).is_err());
        let mut dup = est(&[0.1, 0.2, 0.3]);
        dup[2].expert_id = "e0".into();
        assert!(aggregate_elicitation(&dup).is_err());
    }
}
