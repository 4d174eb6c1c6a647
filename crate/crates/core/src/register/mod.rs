//! The risk register: one document holding the risk universe, models,
//! indicators, measurements, findings, escalations and lifecycle state,
//! plus the audit log and disclosure reports built from it.

mod audit;
mod disclosure;
mod entry;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::canonical::{self, SchemaViolation};
use crate::governance::{EscalationEvent, GovernanceError};
use crate::identification::{
    DomainStatus, Finding, IdentificationError, RiskDomainEntry, StubTask,
};
use crate::indicators::{
    EvaluationSchedule, IndicatorCatalog, IndicatorError, IndicatorValue, Measurement, RuleStatus,
};
use crate::lifecycle::LifecycleState;
use crate::riskmodel::{RiskModel, RiskModelError};
use crate::time::Timestamp;
use crate::tolerance::{BudgetLedger, ToleranceError};

pub use audit::{
    decode_log, event_hash, verify_bytes, verify_chain, AuditEvent, AuditHead, AuditKind, AuditLog,
    AuditRecord, ChainBroken, GENESIS, HASH_LEN,
};
pub use disclosure::{
    generate_disclosure, Disclosure, DisclosureBody, DisclosureKind, DomainRiskLine, Incident,
    Period, TimelineEntry,
};
pub use entry::{
    build_entry, domain_residuals, ActionPlan, EntryDraft, MitigationDraft, MitigationStatus,
    RegisterEntry, RuleMapping,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegisterError {
    #[error("entry is missing required field `{0}`")]
    MissingField(&'static str),
    #[error("risk owner `{owner}` rejected: {reason}")]
    UnknownOwner { owner: String, reason: String },
    #[error("unknown risk model `{0}`")]
    UnknownModel(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("unknown entry `{0}`")]
    UnknownEntry(String),
    #[error("KRI `{0}` has no rule in the entry's mapping")]
    UnmappedKri(String),
    #[error("rule `{rule}` cannot map to this entry: {reason}")]
    InvalidMapping { rule: String, reason: String },
    #[error("residual rate {residual} exceeds inherent rate {inherent}")]
    ResidualExceedsInherent { residual: f64, inherent: f64 },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("disclosure period is empty")]
    EmptyPeriod,
    #[error(transparent)]
    ChainBroken(#[from] ChainBroken),
    #[error(transparent)]
    Schema(#[from] SchemaViolation),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Model(#[from] RiskModelError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Tolerance(#[from] ToleranceError),
    #[error(transparent)]
    Identification(#[from] IdentificationError),
}

pub type Result<T, E = RegisterError> = std::result::Result<T, E>;

/// One episode of a rule being breached, from detection until the rule is
/// no longer breached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachRecord {
    pub rule_id: String,
    pub detected_at: Timestamp,
    pub escalation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kri_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kci_value: Option<IndicatorValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleared_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub item: String,
    pub done: bool,
}

/// Annual risk-culture checklist attached to governance disclosures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CultureChecklist {
    pub year: i32,
    pub items: Vec<ChecklistItem>,
}

/// The register document. Top-level fields this version does not know
/// are kept in `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterSnapshot {
    pub domains: Vec<RiskDomainEntry>,
    pub models: Vec<RiskModel>,
    pub catalog: IndicatorCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetLedger>,
    pub entries: Vec<RegisterEntry>,
    pub measurements: Vec<Measurement>,
    pub rule_statuses: Vec<RuleStatus>,
    pub breaches: Vec<BreachRecord>,
    pub escalations: Vec<EscalationEvent>,
    pub findings: Vec<Finding>,
    pub tasks: Vec<StubTask>,
    pub schedule: EvaluationSchedule,
    pub lifecycle: LifecycleState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub culture_checklist: Option<CultureChecklist>,
    #[serde(skip)]
    pub extra: BTreeMap<String, Value>,
}

const KNOWN_FIELDS: &[&str] = &[
    "domains",
    "models",
    "catalog",
    "budget",
    "entries",
    "measurements",
    "rule_statuses",
    "breaches",
    "escalations",
    "findings",
    "tasks",
    "schedule",
    "lifecycle",
    "culture_checklist",
];

impl RegisterSnapshot {
    pub fn model(&self, id: &str) -> Result<&RiskModel> {
        self.models
            .iter()
            .find(|m| m.id() == id)
            .ok_or_else(|| RegisterError::UnknownModel(id.to_string()))
    }

    pub fn entry(&self, risk_id: &str) -> Result<&RegisterEntry> {
        self.entries
            .iter()
            .find(|e| e.risk_id == risk_id)
            .ok_or_else(|| RegisterError::UnknownEntry(risk_id.to_string()))
    }

    pub fn domain(&self, id: &str) -> Result<&RiskDomainEntry> {
        self.domains
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| IdentificationError::UnknownDomain(id.to_string()).into())
    }

    pub fn finding(&self, id: &str) -> Result<&Finding> {
        self.findings
            .iter()
            .find(|f| f.id == id)
            .ok_or_else(|| IdentificationError::UnknownFinding(id.to_string()).into())
    }

    pub fn escalation(&self, id: &str) -> Result<&EscalationEvent> {
        self.escalations
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| GovernanceError::UnknownEscalation(id.to_string()).into())
    }

    /// Ongoing breach episode of a rule, if any.
    pub fn open_breach(&self, rule_id: &str) -> Option<&BreachRecord> {
        self.breaches
            .iter()
            .rev()
            .find(|b| b.rule_id == rule_id && b.cleared_at.is_none())
    }

    /// Every breached rule status has an escalation on record.
    pub fn breaches_escalated(&self) -> bool {
        self.rule_statuses
            .iter()
            .filter(|s| s.state == crate::indicators::RuleState::Breached)
            .all(|s| {
                self.breaches.iter().any(|b| {
                    b.rule_id == s.rule_id
                        && self.escalations.iter().any(|e| e.id == b.escalation_id)
                })
            })
    }

    /// In-scope domains with neither a register entry nor an open action.
    pub fn incomplete_domains(&self) -> Vec<&str> {
        self.domains
            .iter()
            .filter(|d| d.status == DomainStatus::InScope)
            .filter(|d| {
                let has_entry = self
                    .entries
                    .iter()
                    .any(|e| e.domain_id == d.id || d.linked_models.contains(&e.risk_id));
                !has_entry && !d.has_open_action()
            })
            .map(|d| d.id.as_str())
            .collect()
    }

    /// Checks id uniqueness and the definitions the register relies on.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for id in self.models.iter().map(|m| m.id()) {
            if !ids.insert(id) {
                return Err(RegisterError::DuplicateId(id.to_string()));
            }
        }
        let mut dids = BTreeSet::new();
        for d in &self.domains {
            if !dids.insert(d.id.as_str()) {
                return Err(RegisterError::DuplicateId(d.id.clone()));
            }
        }
        self.models.iter().try_for_each(RiskModel::validate)?;
        self.catalog.validate()?;
        if let Some(b) = &self.budget {
            b.validate()?;
        }
        for e in &self.entries {
            if e.residual_risk.rate > e.inherent_risk.rate {
                return Err(RegisterError::ResidualExceedsInherent {
                    residual: e.residual_risk.rate,
                    inherent: e.inherent_risk.rate,
                });
            }
        }
        Ok(())
    }
}

/// Canonical bytes of a snapshot, unknown fields included.
pub fn export_register(snapshot: &RegisterSnapshot) -> Vec<u8> {
    let mut value = serde_json::to_value(snapshot).expect("snapshot serializes");
    if let Value::Object(map) = &mut value {
        for (k, v) in &snapshot.extra {
            map.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    canonical::encode_value(&value).into_bytes()
}

pub fn import_register(bytes: &[u8]) -> Result<RegisterSnapshot, SchemaViolation> {
    let value: Value = canonical::from_canonical(bytes)?;
    let Value::Object(map) = value else {
        return Err(SchemaViolation {
            path: ".".into(),
            message: "register document must be an object".into(),
        });
    };
    let (known, extra): (Map<String, Value>, Map<String, Value>) = map
        .into_iter()
        .partition(|(k, _)| KNOWN_FIELDS.contains(&k.as_str()));
    let mut snapshot: RegisterSnapshot = canonical::from_value(&Value::Object(known))?;
    snapshot.extra = extra.into_iter().collect();
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_fields_match_struct() {
        let s = RegisterSnapshot {
            budget: Some(crate::fixtures::cyber1_ledger()),
            culture_checklist: Some(CultureChecklist {
                year: 2026,
                items: vec![],
            }),
            ..RegisterSnapshot::default()
        };
        let v = serde_json::to_value(&s).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, KNOWN_FIELDS.iter().copied().collect());
    }

    #[test]
    fn unknown_fields_round_trip() {
        let doc = br#"{"catalog":{"kcis":[],"kris":[],"rules":[]},"x_future":{"b":[1,2.5]}}"#;
        let s = import_register(doc).unwrap();
        assert_eq!(s.extra["x_future"], serde_json::json!({"b": [1, 2.5]}));
        let out = export_register(&s);
        assert_eq!(import_register(&out).unwrap(), s);
        assert!(String::from_utf8(out)
            .unwrap()
            .contains(r#""x_future":{"b":[1,2.5]}"#));
    }

    #[test]
    fn schema_path_reported() {
        let doc = br#"{"entries":[{"risk_id":"CYBER-1"}]}"#;
        let err = import_register(doc).unwrap_err();
        assert!(err.path.starts_with(".entries[0]."), "{}", err.path);
    }
}
