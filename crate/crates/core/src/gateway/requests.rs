//! Request and response bodies. Requests reject unknown fields.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{from_canonical, parse_lines, SchemaViolation};
use crate::governance::{Approval, EscalationEvent};
use crate::identification::{
    FindingEdit, FindingIntake, FindingStage, Promotion, RiskDomainEntry, StubTask, TaxonomyRow,
};
use crate::indicators::{
    Crossing, IndicatorCatalog, MaxKri, Measurement, MinKci, RuleStatus, ScalingFit,
};
use crate::lifecycle::{Hold, Phase, PlannedMitigation, RedTeamRecord};
use crate::register::{AuditHead, ChainBroken, CultureChecklist, EntryDraft, RegisterEntry};
use crate::riskmodel::RiskModel;
use crate::time::Timestamp;
use crate::tolerance::{BudgetLedger, ComplianceReport};

pub const DEFAULT_ACTOR: &str = "system";

/// Decodes a request body; an empty body reads as `{}`.
pub fn decode_request<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, SchemaViolation> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return from_canonical(b"{}");
    }
    from_canonical(bytes)
}

/// Decodes newline-delimited records. Violation paths start with the
/// 1-based line number.
pub fn decode_records<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, SchemaViolation> {
    parse_lines(text).map_err(|(line, v)| SchemaViolation {
        path: format!("line {line} {}", v.path),
        message: v.message,
    })
}

fn default_actor() -> String {
    DEFAULT_ACTOR.into()
}

/// Definitions to merge into the register. Items replace existing ones
/// with the same id; changed rule thresholds or requirements need
/// threshold-change approval and a replaced budget needs
/// budget-reallocation approval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    #[serde(default)]
    pub taxonomy: Vec<TaxonomyRow>,
    /// CSV text with `name,source` columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy_csv: Option<String>,
    #[serde(default)]
    pub domains: Vec<RiskDomainEntry>,
    #[serde(default)]
    pub models: Vec<RiskModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<IndicatorCatalog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetLedger>,
    #[serde(default)]
    pub entries: Vec<EntryDraft>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub culture_checklist: Option<CultureChecklist>,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportResponse {
    pub audit_seq: u64,
    pub domains_added: Vec<String>,
    pub models: Vec<String>,
    pub rules: Vec<String>,
    pub entries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
}

impl Default for EvaluateRequest {
    fn default() -> Self {
        EvaluateRequest {
            actor: default_actor(),
        }
    }
}

/// Result of a rule evaluation that was recorded in the register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    pub audit_seq: u64,
    pub statuses: Vec<RuleStatus>,
    /// Escalations opened by this evaluation.
    pub escalations: Vec<EscalationEvent>,
    /// Rules whose breach ended with this evaluation.
    pub cleared: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<Hold>,
}

/// Hypothetical indicator values. KRI overrides are taken as effective
/// values (no enhancement margin); KCI overrides are level names, or
/// numbers for continuous KCIs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    #[serde(default)]
    pub kri: BTreeMap<String, f64>,
    #[serde(default)]
    pub kci: BTreeMap<String, crate::indicators::IndicatorValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfEntry {
    pub risk_id: String,
    pub domain_id: String,
    pub inherent: f64,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<f64>,
    /// Weakest level of each rule's KCI that keeps the entry within its
    /// allocation at the current KRI value.
    pub min_kci: BTreeMap<String, MinKci>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub entries: Vec<WhatIfEntry>,
    pub statuses: Vec<RuleStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<ComplianceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingsRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    pub findings: Vec<FindingIntake>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsResponse {
    pub audit_seq: u64,
    pub ids: Vec<String>,
}

/// One change to an existing finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum FindingUpdate {
    Advance {
        to: FindingStage,
        #[serde(default)]
        notes: String,
    },
    Edit {
        edit: FindingEdit,
    },
    Annotate {
        by: String,
        text: String,
    },
    Promote {
        model_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_id: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingUpdateRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    pub update: FindingUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingUpdateResponse {
    pub audit_seq: u64,
    pub stage: FindingStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<StubTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promotion: Option<Promotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcludeRequest {
    pub justification: String,
    /// Role id of the risk owner or CRO deciding the exclusion.
    pub approver: String,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    pub entry: EntryDraft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResponse {
    pub audit_seq: u64,
    pub entry: RegisterEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResponse {
    pub audit_seq: u64,
    pub phase: Phase,
    pub decision: crate::lifecycle::GateDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveRequest {
    /// Role id recorded as resolver.
    pub by: String,
    pub decision: String,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveResponse {
    pub audit_seq: u64,
    pub escalation: EscalationEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<Hold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReallocateRequest {
    pub shares: BTreeMap<String, f64>,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReallocateResponse {
    pub audit_seq: u64,
    pub budget: BudgetLedger,
}

/// Lifecycle bookkeeping that does not change the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum LifecycleUpdate {
    RecordCompute { compute: f64 },
    PlanCompute { compute: f64 },
    SetModelLabel { model_label: String },
    PlanMitigation { mitigation: PlannedMitigation },
    RedTeam { record: RedTeamRecord },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifecycleRequest {
    #[serde(default = "default_actor")]
    pub actor: String,
    pub update: LifecycleUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleResponse {
    pub audit_seq: u64,
    pub lifecycle: crate::lifecycle::LifecycleState,
}

/// Solve for the weakest KCI level (`kri` given) or the largest KRI value
/// (`level` given) that keeps a model within tolerance. Without an explicit
/// tolerance the model's budget allocation is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kri: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solve", rename_all = "snake_case")]
pub enum SolveResponse {
    MinKci {
        model: String,
        tolerance: f64,
        kri: f64,
        #[serde(flatten)]
        result: MinKci,
    },
    MaxKri {
        model: String,
        tolerance: f64,
        level: String,
        #[serde(flatten)]
        result: MaxKri,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub kri_id: String,
    pub threshold: f64,
    pub fit: ScalingFit,
    pub crossing: Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub head: AuditHead,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broken: Option<ChainBroken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DueResponse {
    pub now: Timestamp,
    pub due: Vec<String>,
}
