use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    domain_residuals, BreachRecord, CultureChecklist, RegisterError, RegisterSnapshot, Result,
};
use crate::governance::{
    check_separation, ApprovalPolicy, EscalationTiers, Governance, Resolution, Role,
    SeparationViolation,
};
use crate::identification::DomainStatus;
use crate::numeric::exact_sum;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisclosureKind {
    RiskDisclosure,
    GovernanceDisclosure,
    IncidentReport,
}

impl FromStr for DisclosureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "risk" | "risk_disclosure" => Ok(DisclosureKind::RiskDisclosure),
            "governance" | "governance_disclosure" => Ok(DisclosureKind::GovernanceDisclosure),
            "incident" | "incident_report" => Ok(DisclosureKind::IncidentReport),
            _ => Err(format!("unknown disclosure kind `{s}`")),
        }
    }
}

impl fmt::Display for DisclosureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisclosureKind::RiskDisclosure => "risk_disclosure",
            DisclosureKind::GovernanceDisclosure => "governance_disclosure",
            DisclosureKind::IncidentReport => "incident_report",
        })
    }
}

/// Inclusive reporting window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub from: Timestamp,
    pub to: Timestamp,
}

impl Period {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.from <= t && t <= self.to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRiskLine {
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<DomainStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocated: Option<f64>,
    /// Sum of the domain's entry residuals; `None` when nothing is modeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_allocation: Option<bool>,
    pub breach_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub domain: String,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Timestamp,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub detected_at: Timestamp,
    pub affected_rules: Vec<String>,
    pub escalations: Vec<String>,
    pub timeline: Vec<TimelineEntry>,
    pub actions_taken: Vec<String>,
    /// `open` until every escalation is resolved.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisclosureBody {
    Risk {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        total_tolerance: Option<f64>,
        aggregate_residual: f64,
        domains: Vec<DomainRiskLine>,
        exclusions: Vec<Exclusion>,
    },
    Governance {
        roles: Vec<Role>,
        separation_violations: Vec<SeparationViolation>,
        policies: Vec<ApprovalPolicy>,
        escalation_tiers: EscalationTiers,
        open_escalations: usize,
        overdue_escalations: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        culture_checklist: Option<CultureChecklist>,
    },
    Incidents {
        incidents: Vec<Incident>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disclosure {
    pub kind: DisclosureKind,
    pub period: Period,
    pub body: DisclosureBody,
}

fn breach_domains(snapshot: &RegisterSnapshot, breach: &BreachRecord) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(rule) = snapshot.catalog.rule(&breach.rule_id) {
        out.insert(rule.tolerance_ref.clone());
        if let Ok(entry) = snapshot.entry(&rule.linked_model) {
            out.insert(entry.domain_id.clone());
        }
    }
    out
}

fn risk_body(snapshot: &RegisterSnapshot, period: Period) -> DisclosureBody {
    let residuals = domain_residuals(&snapshot.entries);
    let allocations = snapshot.budget.as_ref().map(|b| &b.allocations);
    let mut ids: BTreeSet<String> = snapshot.domains.iter().map(|d| d.id.clone()).collect();
    ids.extend(residuals.keys().cloned());
    if let Some(a) = allocations {
        ids.extend(a.keys().cloned());
    }
    let mut breach_count: BTreeMap<String, usize> = BTreeMap::new();
    for b in snapshot
        .breaches
        .iter()
        .filter(|b| period.contains(b.detected_at))
    {
        for d in breach_domains(snapshot, b) {
            *breach_count.entry(d).or_default() += 1;
        }
    }
    ids.extend(breach_count.keys().cloned());
    let domains = ids
        .into_iter()
        .map(|id| {
            let allocated = allocations.and_then(|a| a.get(&id).copied());
            let residual = residuals.get(&id).map(|r| r.rate);
            DomainRiskLine {
                status: snapshot
                    .domains
                    .iter()
                    .find(|d| d.id == id)
                    .map(|d| d.status),
                allocated,
                residual,
                within_allocation: residual.map(|r| r <= allocated.unwrap_or(0.0)),
                breach_count: breach_count.get(&id).copied().unwrap_or(0),
                domain: id,
            }
        })
        .collect();
    DisclosureBody::Risk {
        total_tolerance: snapshot.budget.as_ref().map(|b| b.total.max_rate()),
        aggregate_residual: exact_sum(residuals.values().map(|r| r.rate)),
        domains,
        exclusions: snapshot
            .domains
            .iter()
            .filter(|d| d.status == DomainStatus::Excluded)
            .map(|d| Exclusion {
                domain: d.id.clone(),
                justification: d.exclusion_justification.clone().unwrap_or_default(),
            })
            .collect(),
    }
}

fn governance_body(
    snapshot: &RegisterSnapshot,
    governance: &Governance,
    period: Period,
) -> DisclosureBody {
    DisclosureBody::Governance {
        roles: governance.roles.clone(),
        separation_violations: check_separation(&governance.roles),
        policies: governance.policies.clone(),
        escalation_tiers: governance.tiers.clone(),
        open_escalations: snapshot.escalations.iter().filter(|e| e.is_open()).count(),
        overdue_escalations: snapshot
            .escalations
            .iter()
            .filter(|e| e.is_overdue(period.to))
            .map(|e| e.id.clone())
            .collect(),
        culture_checklist: snapshot.culture_checklist.clone(),
    }
}

fn incident_body(snapshot: &RegisterSnapshot, period: Period) -> DisclosureBody {
    let mut groups: BTreeMap<Timestamp, Vec<&BreachRecord>> = BTreeMap::new();
    for b in snapshot
        .breaches
        .iter()
        .filter(|b| period.contains(b.detected_at))
    {
        groups.entry(b.detected_at).or_default().push(b);
    }
    let incidents = groups
        .into_iter()
        .map(|(detected_at, breaches)| {
            let mut timeline = Vec::new();
            let mut actions = vec!["development hold raised".to_string()];
            let mut open = false;
            for b in &breaches {
                let detail = match (&b.kri_value, &b.kci_value) {
                    (Some(k), Some(c)) => format!(" (KRI {k}, KCI {c})"),
                    (Some(k), None) => format!(" (KRI {k})"),
                    _ => String::new(),
                };
                timeline.push(TimelineEntry {
                    at: b.detected_at,
                    event: format!("rule {} breached{detail}", b.rule_id),
                });
                match snapshot
                    .escalations
                    .iter()
                    .find(|e| e.id == b.escalation_id)
                {
                    Some(e) => {
                        let notify: Vec<String> =
                            e.notify.iter().map(ToString::to_string).collect();
                        timeline.push(TimelineEntry {
                            at: e.raised_at,
                            event: format!(
                                "escalation {} raised ({} severity, notify {}, deadline {})",
                                e.id,
                                e.severity,
                                notify.join(", "),
                                e.deadline
                            ),
                        });
                        match &e.resolution {
                            Resolution::Resolved { by, at, decision } => {
                                timeline.push(TimelineEntry {
                                    at: *at,
                                    event: format!("escalation {} resolved by {by}", e.id),
                                });
                                actions.push(decision.clone());
                            }
                            Resolution::Open => open = true,
                        }
                    }
                    None => open = true,
                }
                if let Some(c) = b.cleared_at {
                    timeline.push(TimelineEntry {
                        at: c,
                        event: format!("rule {} no longer breached", b.rule_id),
                    });
                }
            }
            timeline.sort_by_key(|x| x.at);
            Incident {
                detected_at,
                affected_rules: breaches.iter().map(|b| b.rule_id.clone()).collect(),
                escalations: breaches.iter().map(|b| b.escalation_id.clone()).collect(),
                timeline,
                actions_taken: actions,
                status: if open { "open" } else { "resolved" }.to_string(),
            }
        })
        .collect();
    DisclosureBody::Incidents { incidents }
}

/// Builds a disclosure from a snapshot. The same inputs always give the
/// same report.
pub fn generate_disclosure(
    kind: DisclosureKind,
    period: Period,
    snapshot: &RegisterSnapshot,
    governance: &Governance,
) -> Result<Disclosure> {
    if period.to <= period.from {
        return Err(RegisterError::EmptyPeriod);
    }
    let body = match kind {
        DisclosureKind::RiskDisclosure => risk_body(snapshot, period),
        DisclosureKind::GovernanceDisclosure => governance_body(snapshot, governance, period),
        DisclosureKind::IncidentReport => incident_body(snapshot, period),
    };
    Ok(Disclosure { kind, period, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::to_canonical;
    use crate::fixtures;
    use crate::governance::{escalate, EscalationSeverity, EscalationSource};

    fn period() -> Period {
        Period {
            from: Timestamp(0),
            to: Timestamp(1_000_000),
        }
    }

    #[test]
    fn empty_register_risk_disclosure() {
        let d = generate_disclosure(
            DisclosureKind::RiskDisclosure,
            period(),
            &RegisterSnapshot::default(),
            &fixtures::governance(),
        )
        .unwrap();
        assert_eq!(
            d.body,
            DisclosureBody::Risk {
                total_tolerance: None,
                aggregate_residual: 0.0,
                domains: vec![],
                exclusions: vec![]
            }
        );
    }

    #[test]
    fn empty_period_rejected() {
        let p = Period {
            from: Timestamp(5),
            to: Timestamp(5),
        };
        assert_eq!(
            generate_disclosure(
                DisclosureKind::IncidentReport,
                p,
                &RegisterSnapshot::default(),
                &fixtures::governance()
            ),
            Err(RegisterError::EmptyPeriod)
        );
    }

    fn breached() -> RegisterSnapshot {
        let mut s = RegisterSnapshot {
            catalog: fixtures::cyber1_catalog(),
            ..RegisterSnapshot::default()
        };
        s.escalations.push(escalate(
            "E-1".into(),
            EscalationSource::Rule {
                rule_id: fixtures::CYBER_RULE.into(),
            },
            EscalationSeverity::High,
            &fixtures::governance().tiers,
            Timestamp(100),
        ));
        s.breaches.push(BreachRecord {
            rule_id: fixtures::CYBER_RULE.into(),
            detected_at: Timestamp(100),
            escalation_id: "E-1".into(),
            kri_value: Some(60.0),
            kci_value: Some(crate::indicators::IndicatorValue::Level("L2".into())),
            cleared_at: None,
        });
        s
    }

    #[test]
    fn one_breach_one_timeline() {
        let s = breached();
        let d = generate_disclosure(
            DisclosureKind::IncidentReport,
            period(),
            &s,
            &fixtures::governance(),
        )
        .unwrap();
        let DisclosureBody::Incidents { incidents } = &d.body else {
            panic!()
        };
        assert_eq!(incidents.len(), 1);
        assert_eq!(incidents[0].affected_rules, vec![fixtures::CYBER_RULE]);
        assert_eq!(incidents[0].status, "open");
        assert_eq!(incidents[0].timeline.len(), 2);

        let risk = generate_disclosure(
            DisclosureKind::RiskDisclosure,
            period(),
            &s,
            &fixtures::governance(),
        )
        .unwrap();
        let DisclosureBody::Risk { domains, .. } = &risk.body else {
            panic!()
        };
        assert_eq!(
            domains
                .iter()
                .find(|d| d.domain == "cyber")
                .unwrap()
                .breach_count,
            1
        );
    }

    #[test]
    fn deterministic() {
        let s = breached();
        let g = fixtures::governance();
        for kind in [
            DisclosureKind::RiskDisclosure,
            DisclosureKind::GovernanceDisclosure,
            DisclosureKind::IncidentReport,
        ] {
            let a = to_canonical(&generate_disclosure(kind, period(), &s, &g).unwrap());
            let b = to_canonical(&generate_disclosure(kind, period(), &s.clone(), &g).unwrap());
            assert_eq!(a, b);
        }
    }
}
