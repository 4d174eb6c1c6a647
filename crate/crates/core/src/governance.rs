//! Roles, separation of duties, approval policies and escalations.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{Timestamp, SECONDS_PER_HOUR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GovernanceError {
    #[error("no approval policy for action `{0}`")]
    UnknownAction(ActionKind),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown escalation source `{0}`")]
    UnknownSource(String),
    #[error("unknown escalation `{0}`")]
    UnknownEscalation(String),
    #[error("escalation `{0}` is already resolved")]
    AlreadyResolved(String),
    #[error("policy for `{action}` is invalid: {reason}")]
    InvalidPolicy { action: ActionKind, reason: String },
    #[error("duplicate role id `{0}`")]
    DuplicateRole(String),
    #[error("escalation tier `{tier}` is invalid: {reason}")]
    InvalidTier {
        tier: EscalationSeverity,
        reason: String,
    },
    #[error("resolution at {at} precedes the escalation raised at {raised_at}")]
    ResolutionBeforeRaise { at: Timestamp, raised_at: Timestamp },
}

pub type Result<T, E = GovernanceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    RiskOwner,
    Cro,
    ErmStaff,
    SeniorManager,
    BoardAuditCommittee,
    InternalAudit,
    ExternalAuditor,
}

impl RoleKind {
    /// Roles that make or advise on risk decisions.
    pub fn is_management(self) -> bool {
        matches!(
            self,
            RoleKind::RiskOwner | RoleKind::Cro | RoleKind::ErmStaff | RoleKind::SeniorManager
        )
    }

    pub fn is_audit(self) -> bool {
        matches!(self, RoleKind::InternalAudit | RoleKind::ExternalAuditor)
    }
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("role kinds serialize");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub id: String,
    pub kind: RoleKind,
    pub person: String,
}

impl Role {
    pub fn new(id: &str, kind: RoleKind, person: &str) -> Self {
        Role {
            id: id.into(),
            kind,
            person: person.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The CRO advises on risk and must not own a risk.
    CroIsRiskOwner,
    /// Internal audit must stay independent of management.
    AuditorInManagement,
    /// Internal audit needs a reporting line to an audit committee.
    NoAuditCommittee,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationViolation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<String>,
    pub roles: Vec<String>,
}

/// Separation-of-duties violations in a set of role assignments, in a
/// deterministic order.
pub fn check_separation(roles: &[Role]) -> Vec<SeparationViolation> {
    let mut out = Vec::new();
    let persons: BTreeSet<&str> = roles.iter().map(|r| r.person.as_str()).collect();
    for person in persons {
        let held: Vec<&Role> = roles.iter().filter(|r| r.person == person).collect();
        let ids = |pred: &dyn Fn(RoleKind) -> bool| -> Vec<String> {
            held.iter()
                .filter(|r| pred(r.kind))
                .map(|r| r.id.clone())
                .collect()
        };
        let has = |k: RoleKind| held.iter().any(|r| r.kind == k);
        if has(RoleKind::Cro) && has(RoleKind::RiskOwner) {
            out.push(SeparationViolation {
                kind: ViolationKind::CroIsRiskOwner,
                person: Some(person.to_string()),
                roles: ids(&|k| matches!(k, RoleKind::Cro | RoleKind::RiskOwner)),
            });
        }
        if has(RoleKind::InternalAudit) && held.iter().any(|r| r.kind.is_management()) {
            out.push(SeparationViolation {
                kind: ViolationKind::AuditorInManagement,
                person: Some(person.to_string()),
                roles: ids(&|k| k == RoleKind::InternalAudit || k.is_management()),
            });
        }
    }
    let audit: Vec<String> = roles
        .iter()
        .filter(|r| r.kind == RoleKind::InternalAudit)
        .map(|r| r.id.clone())
        .collect();
    if !audit.is_empty()
        && !roles
            .iter()
            .any(|r| r.kind == RoleKind::BoardAuditCommittee)
    {
        out.push(SeparationViolation {
            kind: ViolationKind::NoAuditCommittee,
            person: None,
            roles: audit,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    GateTransition,
    BudgetReallocation,
    Exclusion,
    ThresholdChange,
    /// Clearing a development hold after a breach.
    HoldRelease,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("action kinds serialize");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApprovalPolicy {
    pub action: ActionKind,
    pub required: Vec<RoleKind>,
    #[serde(default)]
    pub forbidden: Vec<RoleKind>,
}

impl ApprovalPolicy {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.required.iter().find(|k| self.forbidden.contains(k)) {
            return Err(GovernanceError::InvalidPolicy {
                action: self.action,
                reason: format!("`{k}` is both required and forbidden"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub role_id: String,
    pub decision: Decision,
}

impl Approval {
    pub fn approve(role_id: &str) -> Self {
        Approval {
            role_id: role_id.into(),
            decision: Decision::Approve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum BlockReason {
    MissingRequired { roles: Vec<RoleKind> },
    ForbiddenParticipant { role_id: String, kind: RoleKind },
    Rejected { role_id: String },
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::MissingRequired { roles } => {
                let names: Vec<String> = roles.iter().map(ToString::to_string).collect();
                write!(f, "missing required approval from {}", names.join(", "))
            }
            BlockReason::ForbiddenParticipant { role_id, kind } => {
                write!(f, "`{role_id}` ({kind}) may not take part in this decision")
            }
            BlockReason::Rejected { role_id } => write!(f, "rejected by `{role_id}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ApprovalOutcome {
    Allowed,
    Blocked { block: BlockReason },
}

impl ApprovalOutcome {
    pub fn is_allowed(&self) -> bool {
        matches!(self, ApprovalOutcome::Allowed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationSeverity {
    Low,
    Medium,
    High,
}

impl fmt::Display for EscalationSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EscalationSeverity::Low => "low",
            EscalationSeverity::Medium => "medium",
            EscalationSeverity::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscalationTier {
    pub deadline_hours: u32,
    pub notify: Vec<RoleKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscalationTiers {
    pub low: EscalationTier,
    pub medium: EscalationTier,
    pub high: EscalationTier,
}

/// Notification chain, most local first.
pub const ESCALATION_CHAIN: [RoleKind; 4] = [
    RoleKind::RiskOwner,
    RoleKind::Cro,
    RoleKind::SeniorManager,
    RoleKind::BoardAuditCommittee,
];

impl Default for EscalationTiers {
    fn default() -> Self {
        EscalationTiers {
            low: EscalationTier {
                deadline_hours: 30 * 24,
                notify: ESCALATION_CHAIN[..1].to_vec(),
            },
            medium: EscalationTier {
                deadline_hours: 7 * 24,
                notify: ESCALATION_CHAIN[..3].to_vec(),
            },
            high: EscalationTier {
                deadline_hours: 24,
                notify: ESCALATION_CHAIN.to_vec(),
            },
        }
    }
}

impl EscalationTiers {
    pub fn tier(&self, severity: EscalationSeverity) -> &EscalationTier {
        match severity {
            EscalationSeverity::Low => &self.low,
            EscalationSeverity::Medium => &self.medium,
            EscalationSeverity::High => &self.high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for severity in [
            EscalationSeverity::Low,
            EscalationSeverity::Medium,
            EscalationSeverity::High,
        ] {
            let tier = self.tier(severity);
            if tier.deadline_hours == 0 {
                return Err(GovernanceError::InvalidTier {
                    tier: severity,
                    reason: "deadline must be at least one hour".into(),
                });
            }
            if tier.notify.is_empty() {
                return Err(GovernanceError::InvalidTier {
                    tier: severity,
                    reason: "notify list is empty".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EscalationSource {
    Rule { rule_id: String },
    Finding { finding_id: String },
}

impl fmt::Display for EscalationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EscalationSource::Rule { rule_id } => write!(f, "rule {rule_id}"),
            EscalationSource::Finding { finding_id } => write!(f, "finding {finding_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Open,
    Resolved {
        by: String,
        at: Timestamp,
        decision: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationEvent {
    pub id: String,
    pub source: EscalationSource,
    pub severity: EscalationSeverity,
    pub raised_at: Timestamp,
    pub notify: Vec<RoleKind>,
    pub deadline: Timestamp,
    pub resolution: Resolution,
}

impl EscalationEvent {
    pub fn is_open(&self) -> bool {
        self.resolution == Resolution::Open
    }

    pub fn is_overdue(&self, now: Timestamp) -> bool {
        self.is_open() && now > self.deadline
    }
}

/// Opens an escalation. The caller checks that `source` exists.
pub fn escalate(
    id: String,
    source: EscalationSource,
    severity: EscalationSeverity,
    tiers: &EscalationTiers,
    now: Timestamp,
) -> EscalationEvent {
    let tier = tiers.tier(severity);
    EscalationEvent {
        id,
        source,
        severity,
        raised_at: now,
        notify: tier.notify.clone(),
        deadline: now.plus_secs(i64::from(tier.deadline_hours.max(1)) * SECONDS_PER_HOUR),
        resolution: Resolution::Open,
    }
}

pub fn resolve(event: &mut EscalationEvent, by: &str, at: Timestamp, decision: &str) -> Result<()> {
    if !event.is_open() {
        return Err(GovernanceError::AlreadyResolved(event.id.clone()));
    }
    if at < event.raised_at {
        return Err(GovernanceError::ResolutionBeforeRaise {
            at,
            raised_at: event.raised_at,
        });
    }
    event.resolution = Resolution::Resolved {
        by: by.to_string(),
        at,
        decision: decision.to_string(),
    };
    Ok(())
}

pub fn overdue(events: &[EscalationEvent], now: Timestamp) -> Vec<&EscalationEvent> {
    events.iter().filter(|e| e.is_overdue(now)).collect()
}

/// Role assignments, approval policies and escalation tiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Governance {
    pub roles: Vec<Role>,
    #[serde(default = "default_policies")]
    pub policies: Vec<ApprovalPolicy>,
    #[serde(default)]
    pub tiers: EscalationTiers,
}

pub fn default_policies() -> Vec<ApprovalPolicy> {
    use RoleKind::*;
    let independent = vec![InternalAudit, ExternalAuditor];
    vec![
        ApprovalPolicy {
            action: ActionKind::GateTransition,
            required: vec![RiskOwner, Cro],
            forbidden: independent.clone(),
        },
        ApprovalPolicy {
            action: ActionKind::BudgetReallocation,
            required: vec![Cro, SeniorManager],
            forbidden: independent.clone(),
        },
        ApprovalPolicy {
            action: ActionKind::Exclusion,
            required: vec![],
            forbidden: independent.clone(),
        },
        ApprovalPolicy {
            action: ActionKind::ThresholdChange,
            required: vec![RiskOwner, Cro],
            forbidden: independent.clone(),
        },
        ApprovalPolicy {
            action: ActionKind::HoldRelease,
            required: vec![Cro, SeniorManager],
            forbidden: independent,
        },
    ]
}

impl Default for Governance {
    fn default() -> Self {
        Governance {
            roles: Vec::new(),
            policies: default_policies(),
            tiers: EscalationTiers::default(),
        }
    }
}

impl Governance {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.roles {
            if !ids.insert(r.id.as_str()) {
                return Err(GovernanceError::DuplicateRole(r.id.clone()));
            }
        }
        let mut actions = BTreeSet::new();
        for p in &self.policies {
            p.validate()?;
            if !actions.insert(p.action) {
                return Err(GovernanceError::InvalidPolicy {
                    action: p.action,
                    reason: "defined more than once".into(),
                });
            }
        }
        self.tiers.validate()
    }

    pub fn role(&self, id: &str) -> Result<&Role> {
        self.roles
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| GovernanceError::UnknownRole(id.to_string()))
    }

    pub fn policy(&self, action: ActionKind) -> Result<&ApprovalPolicy> {
        self.policies
            .iter()
            .find(|p| p.action == action)
            .ok_or(GovernanceError::UnknownAction(action))
    }

    pub fn require_approval(
        &self,
        action: ActionKind,
        approvals: &[Approval],
    ) -> Result<ApprovalOutcome> {
        require_approval(self.policy(action)?, &self.roles, approvals)
    }
}

/// Allowed iff every required role kind approved and no forbidden role
/// took part. Any rejection blocks.
pub fn require_approval(
    policy: &ApprovalPolicy,
    roles: &[Role],
    approvals: &[Approval],
) -> Result<ApprovalOutcome> {
    policy.validate()?;
    let mut approved = BTreeSet::new();
    for a in approvals {
        let role = roles
            .iter()
            .find(|r| r.id == a.role_id)
            .ok_or_else(|| GovernanceError::UnknownRole(a.role_id.clone()))?;
        if policy.forbidden.contains(&role.kind) {
            return Ok(ApprovalOutcome::Blocked {
                block: BlockReason::ForbiddenParticipant {
                    role_id: role.id.clone(),
                    kind: role.kind,
                },
            });
        }
        if a.decision == Decision::Reject {
            return Ok(ApprovalOutcome::Blocked {
                block: BlockReason::Rejected {
                    role_id: role.id.clone(),
                },
            });
        }
        approved.insert(role.kind);
    }
    let missing: Vec<RoleKind> = policy
        .required
        .iter()
        .filter(|k| !approved.contains(k))
        .copied()
        .collect();
    if missing.is_empty() {
        Ok(ApprovalOutcome::Allowed)
    } else {
        Ok(ApprovalOutcome::Blocked {
            block: BlockReason::MissingRequired { roles: missing },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> Vec<Role> {
        vec![
            Role::new("owner-cyber", RoleKind::RiskOwner, "alice"),
            Role::new("cro", RoleKind::Cro, "bob"),
            Role::new("vp-eng", RoleKind::SeniorManager, "carol"),
            Role::new("audit-committee", RoleKind::BoardAuditCommittee, "dana"),
            Role::new("internal-audit", RoleKind::InternalAudit, "erin"),
        ]
    }

    #[test]
    fn disjoint_roles_pass() {
        assert!(check_separation(&roles()).is_empty());
    }

    #[test]
    fn cro_owning_a_risk() {
        let mut r = roles();
        r.push(Role::new("owner-bio", RoleKind::RiskOwner, "bob"));
        let v = check_separation(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::CroIsRiskOwner);
        assert_eq!(v[0].roles, vec!["cro", "owner-bio"]);
    }

    #[test]
    fn auditor_in_management() {
        let mut r = roles();
        r.push(Role::new("vp-ops", RoleKind::SeniorManager, "erin"));
        let v = check_separation(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::AuditorInManagement);
    }

    #[test]
    fn audit_without_committee() {
        let r: Vec<Role> = roles()
            .into_iter()
            .filter(|r| r.kind != RoleKind::BoardAuditCommittee)
            .collect();
        assert_eq!(
            check_separation(&r)[0].kind,
            ViolationKind::NoAuditCommittee
        );
    }

    fn gov() -> Governance {
        Governance {
            roles: roles(),
            ..Governance::default()
        }
    }

    #[test]
    fn approvals() {
        let g = gov();
        let ok = g
            .require_approval(
                ActionKind::GateTransition,
                &[Approval::approve("owner-cyber"), Approval::approve("cro")],
            )
            .unwrap();
        assert!(ok.is_allowed());

        let blocked = g
            .require_approval(
                ActionKind::GateTransition,
                &[
                    Approval::approve("owner-cyber"),
                    Approval::approve("cro"),
                    Approval::approve("internal-audit"),
                ],
            )
            .unwrap();
        assert!(matches!(
            blocked,
            ApprovalOutcome::Blocked {
                block: BlockReason::ForbiddenParticipant { .. }
            }
        ));

        let empty = g.require_approval(ActionKind::GateTransition, &[]).unwrap();
        assert_eq!(
            empty,
            ApprovalOutcome::Blocked {
                block: BlockReason::MissingRequired {
                    roles: vec![RoleKind::RiskOwner, RoleKind::Cro]
                }
            }
        );

        let mut g = gov();
        g.policies
            .retain(|p| p.action != ActionKind::ThresholdChange);
        assert_eq!(
            g.require_approval(ActionKind::ThresholdChange, &[]),
            Err(GovernanceError::UnknownAction(ActionKind::ThresholdChange))
        );
    }

    #[test]
    fn contradictory_policy_rejected() {
        let p = ApprovalPolicy {
            action: ActionKind::Exclusion,
            required: vec![RoleKind::Cro],
            forbidden: vec![RoleKind::Cro],
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn escalation_tiers() {
        let tiers = EscalationTiers::default();
        let t0 = Timestamp(1_000);
        let src = EscalationSource::Rule {
            rule_id: "R".into(),
        };
        let high = escalate(
            "E-1".into(),
            src.clone(),
            EscalationSeverity::High,
            &tiers,
            t0,
        );
        assert_eq!(high.deadline, t0.plus_secs(24 * 3600));
        assert_eq!(high.notify, ESCALATION_CHAIN.to_vec());
        let low = escalate("E-2".into(), src, EscalationSeverity::Low, &tiers, t0);
        assert_eq!(low.notify, vec![RoleKind::RiskOwner]);
        assert_eq!(low.deadline, t0.plus_days(30));
        assert!(!low.is_overdue(t0.plus_days(30)));
        assert!(low.is_overdue(t0.plus_days(30).plus_secs(1)));
    }

    #[test]
    fn resolution_closes_once() {
        let mut e = escalate(
            "E-1".into(),
            EscalationSource::Finding {
                finding_id: "F-1".into(),
            },
            EscalationSeverity::Medium,
            &EscalationTiers::default(),
            Timestamp(10),
        );
        assert!(resolve(&mut e, "cro", Timestamp(5), "x").is_err());
        resolve(&mut e, "cro", Timestamp(20), "controls upgraded").unwrap();
        assert!(!e.is_open());
        assert!(!e.is_overdue(Timestamp(i64::MAX)));
        assert_eq!(
            resolve(&mut e, "cro", Timestamp(30), "again"),
            Err(GovernanceError::AlreadyResolved("E-1".into()))
        );
    }
}
