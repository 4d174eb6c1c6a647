use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_probability, check_rate, QuantifiedRisk, Result, RiskModelError, Severity};
use crate::numeric::{decimal_product, exact_sum};

const BRANCH_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitiatingEvent {
    #[serde(default)]
    pub description: String,
    /// Events per year.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    #[serde(default)]
    pub description: String,
    pub outcomes: Vec<BranchOutcome>,
}

/// End state of one path through the tree. `path[i]` is the outcome index
/// taken at branch point `i`; a missing severity marks a benign end state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTreeLeaf {
    pub path: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTree {
    pub id: String,
    pub initiating_event: InitiatingEvent,
    pub branch_points: Vec<BranchPoint>,
    pub leaves: Vec<EventTreeLeaf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRisk {
    pub path: Vec<usize>,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTreeQuantification {
    /// One entry per leaf, in declaration order.
    pub leaves: Vec<LeafRisk>,
    /// Summed rates per severity class key; benign leaves are not listed.
    pub by_severity: BTreeMap<String, f64>,
    pub benign_rate: f64,
}

impl EventTreeQuantification {
    /// Harm-bearing leaves as quantified risks.
    pub fn harmful(&self) -> Vec<QuantifiedRisk> {
        self.leaves
            .iter()
            .filter_map(|l| {
                l.severity
                    .as_ref()
                    .map(|s| QuantifiedRisk::point(l.rate, s.clone()))
            })
            .collect()
    }
}

impl EventTree {
    pub fn validate(&self) -> Result<()> {
        check_rate(&self.id, self.initiating_event.frequency)?;
        let mut expected_leaves = 1usize;
        for (i, bp) in self.branch_points.iter().enumerate() {
            if bp.outcomes.len() < 2 {
                return Err(RiskModelError::MalformedEventTree {
                    reason: format!("branch point {i} has fewer than 2 outcomes"),
                });
            }
            for o in &bp.outcomes {
                check_probability(&o.label, o.probability)?;
            }
            let sum = exact_sum(bp.outcomes.iter().map(|o| o.probability));
            if (sum - 1.0).abs() > BRANCH_SUM_TOLERANCE {
                return Err(RiskModelError::BranchProbabilitySumError {
                    branch_point: i,
                    sum,
                });
            }
            expected_leaves = expected_leaves.saturating_mul(bp.outcomes.len());
        }
        if self.leaves.len() != expected_leaves {
            return Err(RiskModelError::MalformedEventTree {
                reason: format!(
                    "{} leaves declared, branch arities require {expected_leaves}",
                    self.leaves.len()
                ),
            });
        }
        let mut seen = BTreeSet::new();
        for leaf in &self.leaves {
            if leaf.path.len() != self.branch_points.len() {
                return Err(RiskModelError::MalformedEventTree {
                    reason: format!("leaf path {:?} has wrong length", leaf.path),
                });
            }
            for (bp, &choice) in self.branch_points.iter().zip(&leaf.path) {
                if choice >= bp.outcomes.len() {
                    return Err(RiskModelError::MalformedEventTree {
                        reason: format!("leaf path {:?} names a missing outcome", leaf.path),
                    });
                }
            }
            if !seen.insert(leaf.path.clone()) {
                return Err(RiskModelError::MalformedEventTree {
                    reason: format!("leaf path {:?} declared twice", leaf.path),
                });
            }
            if let Some(s) = &leaf.severity {
                s.validate()?;
            }
        }
        Ok(())
    }

    /// The most severe leaf consequence: the largest quantitative magnitude,
    /// else the first qualitative label.
    pub fn worst_severity(&self) -> Option<&Severity> {
        let mut worst: Option<&Severity> = None;
        for s in self.leaves.iter().filter_map(|l| l.severity.as_ref()) {
            worst = match (worst, s) {
                (None, _) => Some(s),
                (
                    Some(Severity::Quantitative { magnitude: a, .. }),
                    Severity::Quantitative { magnitude: b, .. },
                ) if b > a => Some(s),
                (Some(Severity::Qualitative { .. }), Severity::Quantitative { .. }) => Some(s),
                (w, _) => w,
            };
        }
        worst
    }

    /// Total harm rate across harm-bearing leaves, tagged with the worst severity.
    pub fn quantify(&self) -> Result<QuantifiedRisk> {
        let q = eval_event_tree(self)?;
        let rate = exact_sum(q.by_severity.values().copied());
        let severity = self
            .worst_severity()
            .cloned()
            .unwrap_or(Severity::Qualitative {
                scenario_label: "no harm".into(),
            });
        Ok(QuantifiedRisk::point(rate, severity))
    }
}

/// Leaf rate = initiating frequency × product of branch probabilities on its path.
pub fn eval_event_tree(tree: &EventTree) -> Result<EventTreeQuantification> {
    tree.validate()?;
    let mut leaves = Vec::with_capacity(tree.leaves.len());
    let mut by_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut benign = Vec::new();
    for leaf in &tree.leaves {
        let mut factors = Vec::with_capacity(leaf.path.len() + 1);
        factors.push(tree.initiating_event.frequency);
        for (bp, &choice) in tree.branch_points.iter().zip(&leaf.path) {
            factors.push(bp.outcomes[choice].probability);
        }
        let rate = decimal_product(&factors);
        match &leaf.severity {
            Some(s) => by_class.entry(s.class_key()).or_default().push(rate),
            None => benign.push(rate),
        }
        leaves.push(LeafRisk {
            path: leaf.path.clone(),
            rate,
            severity: leaf.severity.clone(),
        });
    }
    Ok(EventTreeQuantification {
        leaves,
        by_severity: by_class
            .into_iter()
            .map(|(k, rates)| (k, exact_sum(rates)))
            .collect(),
        benign_rate: exact_sum(benign),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(label: &str, p: f64) -> BranchPoint {
        BranchPoint {
            description: label.into(),
            outcomes: vec![
                BranchOutcome {
                    label: "yes".into(),
                    probability: p,
                },
                BranchOutcome {
                    label: "no".into(),
                    probability: 1.0 - p,
                },
            ],
        }
    }

    fn leaf(path: &[usize], sev: Option<Severity>) -> EventTreeLeaf {
        EventTreeLeaf {
            path: path.to_vec(),
            severity: sev,
        }
    }

    #[test]
    fn single_branch() {
        let t = EventTree {
            id: "ET".into(),
            initiating_event: InitiatingEvent {
                description: "attack".into(),
                frequency: 10.0,
            },
            branch_points: vec![binary("succeeds", 0.3)],
            leaves: vec![leaf(&[0], Some(Severity::usd(1e8))), leaf(&[1], None)],
        };
        let q = eval_event_tree(&t).unwrap();
        assert_eq!(q.leaves[0].rate, 3.0);
        assert_eq!(q.leaves[1].rate, 7.0);
        assert_eq!(q.by_severity["100000000 USD"], 3.0);
        assert_eq!(q.benign_rate, 7.0);
        assert_eq!(t.quantify().unwrap().rate, 3.0);
    }

    #[test]
    fn two_branches_and_zero_path() {
        let t = EventTree {
            id: "ET".into(),
            initiating_event: InitiatingEvent {
                description: String::new(),
                frequency: 2.0,
            },
            branch_points: vec![binary("a", 0.5), binary("b", 0.1)],
            leaves: vec![
                leaf(&[0, 0], Some(Severity::usd(1e9))),
                leaf(&[0, 1], Some(Severity::usd(1e6))),
                leaf(&[1, 0], None),
                leaf(&[1, 1], None),
            ],
        };
        let q = eval_event_tree(&t).unwrap();
        assert_eq!(q.leaves[0].rate, 0.1);
        let total = exact_sum(q.leaves.iter().map(|l| l.rate));
        assert!((total - 2.0).abs() < 1e-12);

        let mut zero = t.clone();
        zero.branch_points[0] = binary("a", 0.0);
        assert_eq!(eval_event_tree(&zero).unwrap().leaves[0].rate, 0.0);
    }

    #[test]
    fn branch_sum_checked() {
        let mut bp = binary("a", 0.5);
        bp.outcomes[1].probability = 0.6;
        let t = EventTree {
            id: "ET".into(),
            initiating_event: InitiatingEvent {
                description: String::new(),
                frequency: 1.0,
            },
            branch_points: vec![bp],
            leaves: vec![leaf(&[0], None), leaf(&[1], None)],
        };
        assert!(matches!(
            eval_event_tree(&t),
            Err(RiskModelError::BranchProbabilitySumError {
                branch_point: 0,
                ..
            })
        ));
    }

    #[test]
    fn leaf_count_checked() {
        let t = EventTree {
            id: "ET".into(),
            initiating_event: InitiatingEvent {
                description: String::new(),
                frequency: 1.0,
            },
            branch_points: vec![binary("a", 0.5)],
            leaves: vec![leaf(&[0], None)],
        };
        assert!(matches!(
            eval_event_tree(&t),
            Err(RiskModelError::MalformedEventTree { .. })
        ));
    }
}
