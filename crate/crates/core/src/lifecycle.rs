//! Planning → training → deployed, with evidence-based gates.
//!
//! Planning → training checks:
//! - `a` risk tolerance and budget defined
//! - `b` every in-scope domain has a risk model with KRI/KCI rules
//! - `c` every KRI threshold forecast to be crossed within the planned
//!   compute has a planned mitigation at the solved minimum KCI level
//!
//! Training → deployed checks:
//! - `d` no breached rule
//! - `e` an open-ended red-teaming record for the final model
//! - `f` every high-severity finding resolved or risk-modeled
//! - `g` required approvals present
//!
//! Both gates also need the approval policy for gate transitions to allow.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::governance::{ActionKind, Approval, ApprovalOutcome, Governance, GovernanceError};
use crate::identification::{DomainStatus, FindingSeverity, FindingStage};
use crate::indicators::{
    capability_points, evaluate_rules, forecast_crossing, Crossing, IndicatorContext,
    IndicatorError, KciRequirement, MinKci, RecencyWindow, ThreeWay,
};
use crate::register::RegisterSnapshot;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LifecycleError {
    #[error("{target} is not the phase after {current}")]
    NotNextPhase { current: Phase, target: Phase },
    #[error("gate failed: {}", failed.join(", "))]
    GateFailed { failed: Vec<String> },
    #[error("development hold active since {since} (escalations: {})", escalations.join(", "))]
    HoldActive {
        since: Timestamp,
        escalations: Vec<String>,
    },
    #[error("decision is for {from} → {to} but the state is in {current}")]
    StaleDecision {
        current: Phase,
        from: Phase,
        to: Phase,
    },
    #[error("effective compute may not decrease during training ({current} → {proposed})")]
    ComputeDecreased { current: f64, proposed: f64 },
    #[error("invalid compute value {0}")]
    InvalidCompute(f64),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
}

pub type Result<T, E = LifecycleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Planning,
    Training,
    Deployed,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Planning => Some(Phase::Training),
            Phase::Training => Some(Phase::Deployed),
            Phase::Deployed => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Planning => "planning",
            Phase::Training => "training",
            Phase::Deployed => "deployed",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "planning" => Ok(Phase::Planning),
            "training" => Ok(Phase::Training),
            "deployed" => Ok(Phase::Deployed),
            _ => Err(format!("unknown phase `{s}`")),
        }
    }
}

/// A mitigation the developer commits to have in place by training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedMitigation {
    pub kci_id: String,
    /// Target KCI level name.
    pub level: String,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedTeamRecord {
    pub id: String,
    pub model_label: String,
    pub at: Timestamp,
    pub open_ended: bool,
    #[serde(default)]
    pub summary: String,
}

/// Set by a rule breach; blocks transitions until every listed
/// escalation is resolved with governance approval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hold {
    pub since: Timestamp,
    pub escalations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub from: Phase,
    pub to: Phase,
    pub at: Timestamp,
    pub approved_by: Vec<String>,
    /// Evidence of each passing check.
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LifecycleState {
    pub phase: Phase,
    #[serde(default)]
    pub model_label: String,
    /// Effective training compute reached so far (FLOP).
    #[serde(default)]
    pub effective_compute: f64,
    /// Compute budget for the planned training run (FLOP).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned_compute: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_changed_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<Hold>,
    #[serde(default)]
    pub planned_mitigations: Vec<PlannedMitigation>,
    #[serde(default)]
    pub red_team_records: Vec<RedTeamRecord>,
    #[serde(default)]
    pub history: Vec<PhaseTransition>,
}

impl LifecycleState {
    pub fn new(model_label: &str) -> Self {
        LifecycleState {
            model_label: model_label.to_string(),
            ..LifecycleState::default()
        }
    }

    /// Records training progress; the new figure also marks a weight change.
    pub fn record_compute(&mut self, compute: f64, at: Timestamp) -> Result<()> {
        if !(compute.is_finite() && compute >= 0.0) {
            return Err(LifecycleError::InvalidCompute(compute));
        }
        if self.phase == Phase::Training && compute < self.effective_compute {
            return Err(LifecycleError::ComputeDecreased {
                current: self.effective_compute,
                proposed: compute,
            });
        }
        self.effective_compute = compute;
        self.weights_changed_at = Some(at);
        Ok(())
    }

    pub fn raise_hold(&mut self, escalation_id: &str, at: Timestamp) {
        let hold = self.hold.get_or_insert_with(|| Hold {
            since: at,
            escalations: Vec::new(),
        });
        if !hold.escalations.iter().any(|e| e == escalation_id) {
            hold.escalations.push(escalation_id.to_string());
        }
    }

    /// Removes a resolved escalation; the hold clears when none remain.
    pub fn release_hold(&mut self, escalation_id: &str) {
        if let Some(hold) = &mut self.hold {
            hold.escalations.retain(|e| e != escalation_id);
            if hold.escalations.is_empty() {
                self.hold = None;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    /// Letter `a`–`g` followed by a short label.
    pub name: String,
    pub pass: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateResult {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub from: Phase,
    pub to: Phase,
    pub checks: Vec<GateCheck>,
    pub approved_by: Vec<String>,
    pub approval: ApprovalOutcome,
    pub result: GateResult,
}

impl GateDecision {
    pub fn failed(&self) -> Vec<String> {
        let mut failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        if !self.approval.is_allowed() && !failed.iter().any(|n| n.starts_with('g')) {
            failed.push("approval".into());
        }
        failed
    }
}

/// Inputs to gate evaluation that are not part of the register.
#[derive(Debug, Clone, Copy)]
pub struct GateContext<'a> {
    pub governance: &'a Governance,
    pub approvals: &'a [Approval],
    pub margin: f64,
    pub window: RecencyWindow,
}

fn check(name: &str, pass: bool, evidence: String) -> GateCheck {
    GateCheck {
        name: name.to_string(),
        pass,
        evidence,
    }
}

pub fn evaluate_gate(
    snapshot: &RegisterSnapshot,
    target: Phase,
    ctx: &GateContext<'_>,
) -> Result<GateDecision> {
    let state = &snapshot.lifecycle;
    if state.phase.next() != Some(target) {
        return Err(LifecycleError::NotNextPhase {
            current: state.phase,
            target,
        });
    }
    let approval = ctx
        .governance
        .require_approval(ActionKind::GateTransition, ctx.approvals)?;
    let checks = match target {
        Phase::Training => vec![check_a(snapshot), check_b(snapshot), check_c(snapshot)],
        Phase::Deployed => vec![
            check_d(snapshot, ctx),
            check_e(snapshot),
            check_f(snapshot),
            check(
                "g approvals",
                approval.is_allowed(),
                match &approval {
                    ApprovalOutcome::Allowed => "approval policy satisfied".into(),
                    ApprovalOutcome::Blocked { block } => block.to_string(),
                },
            ),
        ],
        Phase::Planning => unreachable!("planning is never a gate target"),
    };
    let result = if checks.iter().all(|c| c.pass) && approval.is_allowed() {
        GateResult::Pass
    } else {
        GateResult::Fail
    };
    Ok(GateDecision {
        from: state.phase,
        to: target,
        checks,
        approved_by: ctx.approvals.iter().map(|a| a.role_id.clone()).collect(),
        approval,
        result,
    })
}

fn check_a(s: &RegisterSnapshot) -> GateCheck {
    let (pass, evidence) = match &s.budget {
        None => (false, "no risk tolerance or budget defined".to_string()),
        Some(b) => match b.validate() {
            Ok(()) => (
                true,
                format!(
                    "tolerance {}/yr allocated over {} domains",
                    b.total.max_rate(),
                    b.allocations.len()
                ),
            ),
            Err(e) => (false, e.to_string()),
        },
    };
    check("a tolerance and budget", pass, evidence)
}

fn check_b(s: &RegisterSnapshot) -> GateCheck {
    let mut missing = Vec::new();
    for d in s
        .domains
        .iter()
        .filter(|d| d.status == DomainStatus::InScope)
    {
        let models: Vec<&String> = d
            .linked_models
            .iter()
            .filter(|m| s.models.iter().any(|x| x.id() == m.as_str()))
            .collect();
        let ruled = models
            .iter()
            .any(|m| s.catalog.rules.iter().any(|r| &r.linked_model == *m));
        if models.is_empty() {
            missing.push(format!("{} has no risk model", d.id));
        } else if !ruled {
            missing.push(format!("{} has no KRI/KCI rule", d.id));
        }
    }
    let pass = missing.is_empty();
    let evidence = if pass {
        "every in-scope domain is modeled with rules".to_string()
    } else {
        missing.join("; ")
    };
    check("b domains modeled", pass, evidence)
}

/// Level index a rule's mitigation must reach at its KRI threshold: the
/// solved minimum KCI for the rule's budget, or the rule's own
/// requirement when the model cannot be solved.
fn target_level(
    s: &RegisterSnapshot,
    rule: &crate::indicators::IfThenRule,
) -> std::result::Result<Option<usize>, String> {
    let kci = s.catalog.kci(&rule.kci_id).map_err(|e| e.to_string())?;
    let tolerance = s.budget.as_ref().map(|b| {
        b.allocations
            .get(&rule.tolerance_ref)
            .copied()
            .unwrap_or_else(|| b.total.max_rate())
    });
    let chain = s
        .models
        .iter()
        .find(|m| m.id() == rule.linked_model)
        .and_then(|m| m.as_chain());
    if let (Some(chain), Some(tolerance)) = (chain, tolerance) {
        let solver = ThreeWay::with_indicators(
            chain,
            &rule.kri_id,
            &rule.kci_id,
            IndicatorContext::new(&s.catalog),
        );
        if let Ok(solver) = solver {
            return match solver.min_kci(tolerance, rule.kri_threshold) {
                Ok(MinKci::Level { index, .. }) => Ok(Some(index)),
                Ok(MinKci::Infeasible) => Ok(None),
                Err(IndicatorError::Model(e)) => Err(e.to_string()),
                Err(e) => Err(e.to_string()),
            };
        }
    }
    match &rule.required {
        KciRequirement::Level { level } => {
            kci.level_index(level).map(Some).map_err(|e| e.to_string())
        }
        KciRequirement::AtMost { .. } => Ok(Some(1)),
    }
}

fn check_c(s: &RegisterSnapshot) -> GateCheck {
    let state = &s.lifecycle;
    let planned = state.planned_compute;
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    for rule in &s.catalog.rules {
        let points = capability_points(&rule.kri_id, &s.measurements);
        let crossing = forecast_crossing(&points, rule.kri_threshold)
            .ok()
            .map(|f| f.crossing);
        let needed = match (&crossing, planned) {
            (Some(Crossing::NotReached), _) => false,
            (Some(c), Some(budget)) => c.compute().is_some_and(|x| x <= budget),
            _ => true,
        };
        if !needed {
            notes.push(format!(
                "{}: crossing at {} beyond planned compute",
                rule.id,
                crossing
                    .as_ref()
                    .and_then(Crossing::compute)
                    .map_or("never".to_string(), |c| format!("{c:e}"))
            ));
            continue;
        }
        let level = match target_level(s, rule) {
            Ok(Some(level)) => level,
            Ok(None) => {
                problems.push(format!("{}: no KCI level meets the tolerance", rule.id));
                continue;
            }
            Err(e) => {
                problems.push(format!("{}: {e}", rule.id));
                continue;
            }
        };
        let kci = s
            .catalog
            .kci(&rule.kci_id)
            .expect("resolved in target_level");
        let planned_ok = state.planned_mitigations.iter().any(|p| {
            p.kci_id == rule.kci_id && kci.level_index(&p.level).is_ok_and(|i| i >= level)
        });
        let level_name = kci.level_names()[level].to_string();
        let when = match crossing.as_ref().and_then(Crossing::compute) {
            Some(c) => format!("forecast crossing at {c:e}"),
            None => "no usable forecast".to_string(),
        };
        if planned_ok {
            notes.push(format!(
                "{}: {when}; {} {level_name} planned",
                rule.id, rule.kci_id
            ));
        } else {
            problems.push(format!(
                "{}: {when}; no planned {} at {level_name}",
                rule.id, rule.kci_id
            ));
        }
    }
    let pass = problems.is_empty();
    let evidence = if pass {
        if notes.is_empty() {
            "no rules".to_string()
        } else {
            notes.join("; ")
        }
    } else {
        problems.join("; ")
    };
    check("c mitigations ready for forecast crossings", pass, evidence)
}

fn check_d(s: &RegisterSnapshot, ctx: &GateContext<'_>) -> GateCheck {
    let (pass, evidence) =
        match evaluate_rules(&s.catalog, &s.measurements, ctx.margin, &ctx.window) {
            Ok(eval) => {
                let breached: Vec<&str> = eval.breached().map(|r| r.rule_id.as_str()).collect();
                if breached.is_empty() {
                    (
                        true,
                        format!("{} rules, none breached", eval.statuses.len()),
                    )
                } else {
                    (false, format!("breached: {}", breached.join(", ")))
                }
            }
            Err(e) => (false, e.to_string()),
        };
    check("d no breached rule", pass, evidence)
}

fn check_e(s: &RegisterSnapshot) -> GateCheck {
    let label = &s.lifecycle.model_label;
    let record = s
        .lifecycle
        .red_team_records
        .iter()
        .find(|r| r.open_ended && &r.model_label == label);
    check(
        "e open-ended red teaming",
        record.is_some(),
        match record {
            Some(r) => format!("record {} for {label}", r.id),
            None => format!("no open-ended red-teaming record for {label}"),
        },
    )
}

fn check_f(s: &RegisterSnapshot) -> GateCheck {
    let open: Vec<&str> = s
        .findings
        .iter()
        .filter(|f| f.severity_estimate == FindingSeverity::High)
        .filter(|f| match f.stage {
            FindingStage::Dismissed => false,
            FindingStage::Confirmed => f.linked_models.is_empty(),
            _ => true,
        })
        .map(|f| f.id.as_str())
        .collect();
    check(
        "f high-severity findings handled",
        open.is_empty(),
        if open.is_empty() {
            "all high-severity findings resolved or modeled".into()
        } else {
            format!("unresolved: {}", open.join(", "))
        },
    )
}

/// Applies a passing decision. An active hold blocks regardless.
pub fn transition(
    state: &mut LifecycleState,
    decision: &GateDecision,
    at: Timestamp,
) -> Result<()> {
    if let Some(hold) = &state.hold {
        return Err(LifecycleError::HoldActive {
            since: hold.since,
            escalations: hold.escalations.clone(),
        });
    }
    if decision.from != state.phase || state.phase.next() != Some(decision.to) {
        return Err(LifecycleError::StaleDecision {
            current: state.phase,
            from: decision.from,
            to: decision.to,
        });
    }
    if decision.result != GateResult::Pass {
        return Err(LifecycleError::GateFailed {
            failed: decision.failed(),
        });
    }
    state.history.push(PhaseTransition {
        from: decision.from,
        to: decision.to,
        at,
        approved_by: decision.approved_by.clone(),
        evidence: decision
            .checks
            .iter()
            .map(|c| format!("{}: {}", c.name, c.evidence))
            .collect(),
    });
    state.phase = decision.to;
    Ok(())
}
