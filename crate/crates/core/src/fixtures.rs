//! The CYBER-1 worked example: a cyber-misuse scenario chain driven by a
//! capability benchmark (KRI) and an ordinal security level (KCI).
//!
//! Table values are modeling choices for the example, not measured data.

use std::collections::BTreeMap;

use crate::governance::{Governance, Role, RoleKind};
use crate::identification::{ActionItem, DomainStatus, RiskDomainEntry};
use crate::indicators::Measurement;
use crate::indicators::{
    IfThenRule, IndicatorCatalog, Kci, KciMetric, KciProbabilityTable, KciRequirement, Kri,
    KriKind, KriProbabilityTable, KriScale, MitigationType, RiskDirection,
};
use crate::lifecycle::LifecycleState;
use crate::register::{ActionPlan, EntryDraft, MitigationDraft, RegisterSnapshot};
use crate::riskmodel::{ProbabilitySource, RiskModel, ScenarioChain, ScenarioStep, Severity};
use crate::time::Timestamp;
use crate::tolerance::{allocate_budget, BudgetLedger, RiskTolerance};

pub const CYBER1: &str = "CYBER-1";
pub const CYBENCH: &str = "cybench";
pub const SECURITY_LEVEL: &str = "security_level";
pub const CYBER_RULE: &str = "R-CYBER-1";
pub const CYBER_DOMAIN: &str = "cyber";

pub fn cyber1_chain() -> ScenarioChain {
    ScenarioChain {
        id: CYBER1.into(),
        description: "AI-enabled cyberattack causing economic damage of $500M or more".into(),
        initiating_frequency: 2.0,
        steps: vec![
            ScenarioStep {
                id: "uplift".into(),
                description: "model gives the attacker meaningful offensive uplift".into(),
                source: ProbabilitySource::KriTable {
                    kri_id: CYBENCH.into(),
                },
            },
            ScenarioStep {
                id: "access".into(),
                description: "attacker obtains model access despite containment".into(),
                source: ProbabilitySource::KciTable {
                    kci_id: SECURITY_LEVEL.into(),
                },
            },
            ScenarioStep {
                id: "damage".into(),
                description: "attack succeeds at scale".into(),
                source: ProbabilitySource::Fixed { probability: 0.1 },
            },
        ],
        severity: Severity::usd(5e8),
    }
}

pub fn cybench_kri() -> Kri {
    Kri {
        id: CYBENCH.into(),
        name: "Cybench solve rate".into(),
        kind: KriKind::InternalCapability,
        scale: KriScale {
            unit: "%".into(),
            lo: 0.0,
            hi: 100.0,
            direction: RiskDirection::HigherIsRiskier,
        },
        thresholds: vec![60.0],
        table: Some(KriProbabilityTable {
            edges: vec![0.0, 40.0, 60.0],
            probabilities: vec![0.05, 0.2, 0.5],
            provenance: "illustrative expert elicitation".into(),
        }),
    }
}

pub fn security_level_kci() -> Kci {
    Kci {
        id: SECURITY_LEVEL.into(),
        name: "Weight security level".into(),
        mitigation_type: MitigationType::Containment,
        metric: KciMetric::OrderedLevels {
            levels: ["L1", "L2", "L3", "L4"].map(String::from).to_vec(),
        },
        table: Some(KciProbabilityTable {
            probabilities: vec![0.5, 0.2, 0.05, 0.01],
            provenance: "illustrative bypass probabilities".into(),
        }),
    }
}

pub fn cyber1_rule() -> IfThenRule {
    IfThenRule {
        id: CYBER_RULE.into(),
        kri_id: CYBENCH.into(),
        kri_threshold: 60.0,
        kci_id: SECURITY_LEVEL.into(),
        required: KciRequirement::Level { level: "L3".into() },
        linked_model: CYBER1.into(),
        tolerance_ref: CYBER_DOMAIN.into(),
    }
}

pub fn cyber1_catalog() -> IndicatorCatalog {
    IndicatorCatalog {
        kris: vec![cybench_kri()],
        kcis: vec![security_level_kci()],
        rules: vec![cyber1_rule()],
    }
}

pub fn cyber1_model() -> RiskModel {
    RiskModel::ScenarioChain(cyber1_chain())
}

/// 1% per year of $500M+ damage, split 0.006 cyber / 0.004 CBRN.
pub fn cyber1_ledger() -> BudgetLedger {
    let total = RiskTolerance::quantitative(
        0.01,
        Severity::usd(5e8),
        "no more than 1% per year chance of $500M+ economic damage",
    )
    .expect("fixture tolerance is valid");
    let mut ledger = allocate_budget(
        total,
        BTreeMap::from([
            (CYBER_DOMAIN.to_string(), 0.006),
            ("cbrn".to_string(), 0.004),
        ]),
    )
    .expect("fixture allocations fit");
    ledger.rationale.insert(
        CYBER_DOMAIN.into(),
        "coding capability is a development focus".into(),
    );
    ledger
}

pub const CYBER_OWNER: &str = "owner-cyber";

/// A separation-clean set of role assignments.
pub fn governance() -> Governance {
    Governance {
        roles: vec![
            Role::new(CYBER_OWNER, RoleKind::RiskOwner, "alice"),
            Role::new("owner-cbrn", RoleKind::RiskOwner, "frank"),
            Role::new("cro", RoleKind::Cro, "bob"),
            Role::new("vp-eng", RoleKind::SeniorManager, "carol"),
            Role::new("audit-committee", RoleKind::BoardAuditCommittee, "dana"),
            Role::new("internal-audit", RoleKind::InternalAudit, "erin"),
        ],
        ..Governance::default()
    }
}

pub fn cyber1_entry_draft() -> EntryDraft {
    EntryDraft {
        risk_id: CYBER1.into(),
        domain_id: Some(CYBER_DOMAIN.into()),
        risk_owner: Some(CYBER_OWNER.into()),
        kris: Some(vec![CYBENCH.into()]),
        mitigation_status: Some(vec![MitigationDraft {
            kci_id: SECURITY_LEVEL.into(),
            operational: true,
        }]),
        mapping: Some(vec![CYBER_RULE.into()]),
        action_plan: Some(ActionPlan {
            actions: vec![ActionItem {
                what: "reach security level L4 before the next scale-up".into(),
                who: CYBER_OWNER.into(),
                due: None,
                resources: "security engineering team".into(),
                done: false,
            }],
        }),
    }
}

pub fn cyber_domain() -> RiskDomainEntry {
    RiskDomainEntry {
        id: CYBER_DOMAIN.into(),
        name: "Cyber offense".into(),
        source: "internal taxonomy".into(),
        status: DomainStatus::InScope,
        exclusion_justification: None,
        linked_models: vec![CYBER1.into()],
        action_items: vec![],
    }
}

/// Fixed epoch for fixture timestamps (2026-01-01T00:00:00Z).
pub const T0: Timestamp = Timestamp(1_767_225_600);

/// Cybench 30 at 1e22 FLOP and 50 at 1e24 FLOP; the fit crosses 60 at 1e25.
pub fn cybench_history() -> Vec<Measurement> {
    let mut a = Measurement::number(CYBENCH, 30.0, T0);
    a.effective_compute = Some(1e22);
    let mut b = Measurement::number(CYBENCH, 50.0, T0.plus_days(1));
    b.effective_compute = Some(1e24);
    vec![a, b]
}

/// A planning-phase register for CYBER-1 with the security level at L2.
pub fn cyber1_register() -> RegisterSnapshot {
    let mut measurements = cybench_history();
    measurements.push(Measurement::level(SECURITY_LEVEL, "L2", T0.plus_days(1)));
    RegisterSnapshot {
        domains: vec![cyber_domain()],
        models: vec![cyber1_model()],
        catalog: cyber1_catalog(),
        budget: Some(cyber1_ledger()),
        measurements,
        lifecycle: LifecycleState::new("frontier-1"),
        ..RegisterSnapshot::default()
    }
}
