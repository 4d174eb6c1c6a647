//! The risk universe: domains imported from a taxonomy, documented
//! exclusions, and red-team findings moving through triage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::governance::{Role, RoleKind};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentificationError {
    #[error("duplicate domain name `{0}`")]
    DuplicateName(String),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown finding `{0}`")]
    UnknownFinding(String),
    #[error("a justification is required")]
    EmptyJustification,
    #[error("role `{role}` ({kind}) may not make this decision")]
    UnauthorizedRole { role: String, kind: RoleKind },
    #[error("finding `{finding}` cannot move from {from} to {to}")]
    IllegalTransition {
        finding: String,
        from: FindingStage,
        to: FindingStage,
    },
    #[error("finding `{0}` needs a fishbone categorization before it can be confirmed")]
    MissingFishbone(String),
    #[error("finding `{0}` is not confirmed")]
    NotConfirmed(String),
    #[error("finding `{0}` comes from a third party and can only be annotated")]
    ThirdPartyImmutable(String),
    #[error("intake line {line}: {message}")]
    Intake { line: usize, message: String },
}

pub type Result<T, E = IdentificationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainStatus {
    InScope,
    Excluded,
}

/// A planned piece of work: what, who, by when, with what.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    pub what: String,
    #[serde(default)]
    pub who: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<Timestamp>,
    #[serde(default)]
    pub resources: String,
    #[serde(default)]
    pub done: bool,
}

impl ActionItem {
    pub fn open(what: impl Into<String>) -> Self {
        ActionItem {
            what: what.into(),
            who: String::new(),
            due: None,
            resources: String::new(),
            done: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskDomainEntry {
    pub id: String,
    pub name: String,
    /// Citation of the taxonomy or finding the domain came from.
    pub source: String,
    pub status: DomainStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_justification: Option<String>,
    #[serde(default)]
    pub linked_models: Vec<String>,
    #[serde(default)]
    pub action_items: Vec<ActionItem>,
}

impl RiskDomainEntry {
    pub fn has_open_action(&self) -> bool {
        self.action_items.iter().any(|a| !a.done)
    }

    /// Invariant check: exclusions are justified; in-scope domains have a
    /// model or an open action item.
    pub fn is_consistent(&self) -> bool {
        match self.status {
            DomainStatus::Excluded => self
                .exclusion_justification
                .as_deref()
                .is_some_and(|j| !j.trim().is_empty()),
            DomainStatus::InScope => !self.linked_models.is_empty() || self.has_open_action(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub name: String,
    pub source: String,
}

/// Lower-case id from a name: alphanumerics kept, runs of anything else
/// collapsed to `_`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn model_action(name: &str) -> ActionItem {
    ActionItem::open(format!("define risk models and KRI/KCI rules for {name}"))
}

/// Creates one in-scope domain per row, each with an open modeling action.
/// `existing` domains take part in the duplicate check.
pub fn import_taxonomy(
    rows: &[TaxonomyRow],
    existing: &[RiskDomainEntry],
) -> Result<Vec<RiskDomainEntry>> {
    let mut names: BTreeSet<String> = existing.iter().map(|d| d.name.to_lowercase()).collect();
    let mut ids: BTreeSet<String> = existing.iter().map(|d| d.id.clone()).collect();
    rows.iter()
        .map(|row| {
            let id = slug(&row.name);
            if id.is_empty() || !names.insert(row.name.to_lowercase()) || !ids.insert(id.clone()) {
                return Err(IdentificationError::DuplicateName(row.name.clone()));
            }
            Ok(RiskDomainEntry {
                id,
                name: row.name.clone(),
                source: row.source.clone(),
                status: DomainStatus::InScope,
                exclusion_justification: None,
                linked_models: Vec::new(),
                action_items: vec![model_action(&row.name)],
            })
        })
        .collect()
}

/// Only risk owners and the CRO may exclude a domain.
pub fn exclude_risk(
    domain: &mut RiskDomainEntry,
    justification: &str,
    approver: &Role,
) -> Result<()> {
    if justification.trim().is_empty() {
        return Err(IdentificationError::EmptyJustification);
    }
    if !matches!(approver.kind, RoleKind::RiskOwner | RoleKind::Cro) {
        return Err(IdentificationError::UnauthorizedRole {
            role: approver.id.clone(),
            kind: approver.kind,
        });
    }
    domain.status = DomainStatus::Excluded;
    domain.exclusion_justification = Some(justification.to_string());
    Ok(())
}

pub fn parse_taxonomy_csv(text: &str) -> Result<Vec<TaxonomyRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| IdentificationError::Intake {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingStage {
    Reported,
    Triaged,
    Investigating,
    Confirmed,
    Dismissed,
}

impl std::fmt::Display for FindingStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FindingStage::Reported => "reported",
            FindingStage::Triaged => "triaged",
            FindingStage::Investigating => "investigating",
            FindingStage::Confirmed => "confirmed",
            FindingStage::Dismissed => "dismissed",
        })
    }
}

impl FindingStage {
    pub fn is_terminal(self) -> bool {
        matches!(self, FindingStage::Confirmed | FindingStage::Dismissed)
    }

    /// Forward along reported → triaged → investigating → confirmed
    /// (skipping allowed), or to dismissed from any open stage.
    pub fn can_advance_to(self, to: FindingStage) -> bool {
        !self.is_terminal() && (to == FindingStage::Dismissed || to > self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReporterKind {
    Internal,
    ThirdParty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingSeverity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FishboneCategory {
    Model,
    Data,
    ToolingScaffolding,
    UserBehavior,
    DeploymentContext,
    ExternalEnvironment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fishbone {
    pub category: FishboneCategory,
    #[serde(default)]
    pub cause_notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageChange {
    pub from: FindingStage,
    pub to: FindingStage,
    pub at: Timestamp,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub by: String,
    pub at: Timestamp,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub reporter: ReporterKind,
    /// Absent for anonymous reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter_id: Option<String>,
    pub description: String,
    pub severity_estimate: FindingSeverity,
    pub stage: FindingStage,
    pub reported_at: Timestamp,
    #[serde(default)]
    pub history: Vec<StageChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fishbone: Option<Fishbone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dismissal_justification: Option<String>,
    /// Triage target date; stored, not enforced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<Timestamp>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub linked_models: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_id: Option<String>,
}

/// One record of a finding intake file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingIntake {
    pub reporter: ReporterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter_id: Option<String>,
    pub description: String,
    pub severity: FindingSeverity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fishbone: Option<Fishbone>,
}

impl Finding {
    pub fn new(id: String, intake: FindingIntake, at: Timestamp) -> Self {
        Finding {
            id,
            reporter: intake.reporter,
            reporter_id: intake
                .reporter_id
                .filter(|r| !r.trim().is_empty() && r != "anonymous"),
            description: intake.description,
            severity_estimate: intake.severity,
            stage: FindingStage::Reported,
            reported_at: at,
            history: Vec::new(),
            fishbone: intake.fishbone,
            dismissal_justification: None,
            due: None,
            annotations: Vec::new(),
            linked_models: Vec::new(),
            domain_id: None,
        }
    }

    pub fn is_high_and_confirmed(&self) -> bool {
        self.stage == FindingStage::Confirmed && self.severity_estimate == FindingSeverity::High
    }
}

/// Follow-up risk analysis owed on a confirmed high-severity finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubTask {
    pub id: String,
    pub finding_id: String,
    pub what: String,
    pub created_at: Timestamp,
    #[serde(default)]
    pub done: bool,
}

/// Moves a finding to `to`. Confirming a high-severity finding returns a
/// stub task for the follow-up risk analysis; dismissing uses `notes` as
/// the justification.
pub fn advance_finding(
    finding: &mut Finding,
    to: FindingStage,
    notes: &str,
    at: Timestamp,
) -> Result<Option<StubTask>> {
    if !finding.stage.can_advance_to(to) {
        return Err(IdentificationError::IllegalTransition {
            finding: finding.id.clone(),
            from: finding.stage,
            to,
        });
    }
    match to {
        FindingStage::Confirmed if finding.fishbone.is_none() => {
            return Err(IdentificationError::MissingFishbone(finding.id.clone()))
        }
        FindingStage::Dismissed if notes.trim().is_empty() => {
            return Err(IdentificationError::EmptyJustification)
        }
        FindingStage::Dismissed => finding.dismissal_justification = Some(notes.to_string()),
        _ => {}
    }
    finding.history.push(StageChange {
        from: finding.stage,
        to,
        at,
        notes: notes.to_string(),
    });
    finding.stage = to;
    Ok(finding.is_high_and_confirmed().then(|| StubTask {
        id: format!("T-{}", finding.id),
        finding_id: finding.id.clone(),
        what: format!("risk analysis for confirmed finding {}", finding.id),
        created_at: at,
        done: false,
    }))
}

/// Content edits by the organization. Third-party reports are immutable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_estimate: Option<FindingSeverity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fishbone: Option<Fishbone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<Timestamp>,
}

pub fn edit_finding(finding: &mut Finding, edit: FindingEdit) -> Result<()> {
    let touches_report = edit.description.is_some() || edit.severity_estimate.is_some();
    if finding.reporter == ReporterKind::ThirdParty && touches_report {
        return Err(IdentificationError::ThirdPartyImmutable(finding.id.clone()));
    }
    if let Some(d) = edit.description {
        finding.description = d;
    }
    if let Some(s) = edit.severity_estimate {
        finding.severity_estimate = s;
    }
    if let Some(f) = edit.fishbone {
        finding.fishbone = Some(f);
    }
    if edit.due.is_some() {
        finding.due = edit.due;
    }
    Ok(())
}

pub fn annotate_finding(finding: &mut Finding, by: &str, text: &str, at: Timestamp) {
    finding.annotations.push(Annotation {
        by: by.to_string(),
        at,
        text: text.to_string(),
    });
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Promotion {
    pub domain_id: String,
    pub created_domain: bool,
    pub linked: bool,
}

/// Registers `model_id` under `domain_id` (created if absent), records an
/// open KRI/KCI action on the domain, and links the finding. Repeating a
/// promotion changes nothing.
pub fn promote_finding(
    finding: &mut Finding,
    domains: &mut Vec<RiskDomainEntry>,
    model_id: &str,
    domain_id: Option<&str>,
) -> Result<Promotion> {
    if finding.stage != FindingStage::Confirmed {
        return Err(IdentificationError::NotConfirmed(finding.id.clone()));
    }
    let domain_id = domain_id
        .map(str::to_string)
        .or_else(|| finding.domain_id.clone())
        .unwrap_or_else(|| format!("finding_{}", slug(&finding.id)));
    let created_domain = !domains.iter().any(|d| d.id == domain_id);
    if created_domain {
        domains.push(RiskDomainEntry {
            id: domain_id.clone(),
            name: finding.description.clone(),
            source: format!("red-team finding {}", finding.id),
            status: DomainStatus::InScope,
            exclusion_justification: None,
            linked_models: Vec::new(),
            action_items: Vec::new(),
        });
    }
    let domain = domains
        .iter_mut()
        .find(|d| d.id == domain_id)
        .expect("domain exists or was just created");
    let mut linked = false;
    if !domain.linked_models.iter().any(|m| m == model_id) {
        domain.linked_models.push(model_id.to_string());
        linked = true;
    }
    let action = ActionItem::open(format!("define KRI/KCI rules for model {model_id}"));
    if !domain.action_items.iter().any(|a| a.what == action.what) {
        domain.action_items.push(action);
    }
    if domain.status == DomainStatus::Excluded {
        domain.status = DomainStatus::InScope;
        domain.exclusion_justification = None;
    }
    if !finding.linked_models.iter().any(|m| m == model_id) {
        finding.linked_models.push(model_id.to_string());
    }
    finding.domain_id = Some(domain_id.clone());
    Ok(Promotion {
        domain_id,
        created_domain,
        linked,
    })
}

/// Parses newline-delimited JSON records, skipping blank lines.
pub fn parse_finding_lines(text: &str) -> Result<Vec<FindingIntake>> {
    crate::canonical::parse_lines(text).map_err(|(line, v)| IdentificationError::Intake {
        line,
        message: v.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<TaxonomyRow> {
        vec![
            TaxonomyRow {
                name: "Cyber offense".into(),
                source: "MIT AI Risk Repository 2.2".into(),
            },
            TaxonomyRow {
                name: "CBRN".into(),
                source: "MIT AI Risk Repository 2.3".into(),
            },
        ]
    }

    #[test]
    fn import_creates_in_scope_domains() {
        let d = import_taxonomy(&rows(), &[]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d
            .iter()
            .all(|d| d.status == DomainStatus::InScope && d.has_open_action()));
        assert_eq!(d[0].id, "cyber_offense");
        assert!(d.iter().all(RiskDomainEntry::is_consistent));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut r = rows();
        r.push(r[0].clone());
        assert_eq!(
            import_taxonomy(&r, &[]),
            Err(IdentificationError::DuplicateName("Cyber offense".into()))
        );
        let existing = import_taxonomy(&rows(), &[]).unwrap();
        assert!(import_taxonomy(&rows()[..1], &existing).is_err());
    }

    #[test]
    fn exclusions() {
        let mut d = import_taxonomy(&rows(), &[]).unwrap();
        let owner = Role::new("owner", RoleKind::RiskOwner, "alice");
        let audit = Role::new("ia", RoleKind::InternalAudit, "erin");
        assert_eq!(
            exclude_risk(&mut d[1], "  ", &owner),
            Err(IdentificationError::EmptyJustification)
        );
        assert!(matches!(
            exclude_risk(&mut d[1], "not plausible for a code model", &audit),
            Err(IdentificationError::UnauthorizedRole { .. })
        ));
        exclude_risk(&mut d[1], "not plausible for a code model", &owner).unwrap();
        assert_eq!(d[1].status, DomainStatus::Excluded);
        assert_eq!(
            d[1].exclusion_justification.as_deref(),
            Some("not plausible for a code model")
        );
        assert!(d[1].is_consistent());
        assert_eq!(
            d.iter()
                .filter(|d| d.status == DomainStatus::InScope)
                .count(),
            1
        );
    }

    fn finding(severity: FindingSeverity, reporter: ReporterKind) -> Finding {
        Finding::new(
            "F-1".into(),
            FindingIntake {
                reporter,
                reporter_id: Some("red-team-a".into()),
                description: "long context enables bio protocol synthesis".into(),
                severity,
                fishbone: None,
            },
            Timestamp(0),
        )
    }

    fn fishbone() -> FindingEdit {
        FindingEdit {
            fishbone: Some(Fishbone {
                category: FishboneCategory::Model,
                cause_notes: "long-context recall".into(),
            }),
            ..FindingEdit::default()
        }
    }

    #[test]
    fn stage_machine() {
        let mut f = finding(FindingSeverity::Low, ReporterKind::Internal);
        assert_eq!(
            advance_finding(&mut f, FindingStage::Triaged, "", Timestamp(1)),
            Ok(None)
        );
        assert_eq!(
            advance_finding(&mut f, FindingStage::Confirmed, "", Timestamp(2)),
            Err(IdentificationError::MissingFishbone("F-1".into()))
        );
        edit_finding(&mut f, fishbone()).unwrap();
        advance_finding(&mut f, FindingStage::Confirmed, "", Timestamp(2)).unwrap();
        assert!(matches!(
            advance_finding(&mut f, FindingStage::Reported, "", Timestamp(3)),
            Err(IdentificationError::IllegalTransition { .. })
        ));
        assert_eq!(f.history.len(), 2);
    }

    #[test]
    fn confirming_high_severity_emits_stub() {
        let mut f = finding(FindingSeverity::High, ReporterKind::Internal);
        advance_finding(&mut f, FindingStage::Triaged, "", Timestamp(1)).unwrap();
        edit_finding(&mut f, fishbone()).unwrap();
        let stub = advance_finding(&mut f, FindingStage::Confirmed, "", Timestamp(2))
            .unwrap()
            .unwrap();
        assert_eq!(stub.finding_id, "F-1");
    }

    #[test]
    fn dismissal_needs_justification() {
        let mut f = finding(FindingSeverity::Medium, ReporterKind::Internal);
        assert_eq!(
            advance_finding(&mut f, FindingStage::Dismissed, "", Timestamp(1)),
            Err(IdentificationError::EmptyJustification)
        );
        advance_finding(
            &mut f,
            FindingStage::Dismissed,
            "duplicate of F-0",
            Timestamp(1),
        )
        .unwrap();
        assert!(advance_finding(&mut f, FindingStage::Triaged, "", Timestamp(2)).is_err());
    }

    #[test]
    fn third_party_only_annotated() {
        let mut f = finding(FindingSeverity::High, ReporterKind::ThirdParty);
        let edit = FindingEdit {
            severity_estimate: Some(FindingSeverity::Low),
            ..FindingEdit::default()
        };
        assert_eq!(
            edit_finding(&mut f, edit),
            Err(IdentificationError::ThirdPartyImmutable("F-1".into()))
        );
        annotate_finding(&mut f, "cro", "acknowledged", Timestamp(3));
        assert_eq!(f.annotations.len(), 1);
        assert_eq!(f.severity_estimate, FindingSeverity::High);
    }

    #[test]
    fn promotion() {
        let mut domains = import_taxonomy(&rows(), &[]).unwrap();
        let mut f = finding(FindingSeverity::High, ReporterKind::Internal);
        assert_eq!(
            promote_finding(&mut f, &mut domains, "BIO-LC", None),
            Err(IdentificationError::NotConfirmed("F-1".into()))
        );
        edit_finding(&mut f, fishbone()).unwrap();
        advance_finding(&mut f, FindingStage::Confirmed, "", Timestamp(1)).unwrap();
        let p = promote_finding(&mut f, &mut domains, "BIO-LC", None).unwrap();
        assert!(p.created_domain && p.linked);
        assert_eq!(domains.len(), 3);
        assert!(domains[2].has_open_action());
        let again = promote_finding(&mut f, &mut domains, "BIO-LC", None).unwrap();
        assert!(!again.created_domain && !again.linked);
        assert_eq!(domains.len(), 3);
        assert_eq!(domains[2].linked_models, vec!["BIO-LC"]);
        assert_eq!(domains[2].action_items.len(), 1);
    }

    #[test]
    fn intake_formats() {
        let csv = "name,source\nCyber offense, MIT 2.2\nCBRN,MIT 2.3\n";
        assert_eq!(
            parse_taxonomy_csv(csv).unwrap(),
            rows()
                .iter()
                .map(|r| TaxonomyRow {
                    source: r.source.replace("AI Risk Repository ", ""),
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        );

        let lines = r#"{"reporter":"third_party","description":"x","severity":"high"}

{"reporter":"internal","reporter_id":"anonymous","description":"y","severity":"low"}"#;
        let parsed = parse_finding_lines(lines).unwrap();
        assert_eq!(parsed.len(), 2);
        let f = Finding::new("F-2".into(), parsed[1].clone(), Timestamp(0));
        assert_eq!(f.reporter_id, None);
        assert!(!crate::canonical::to_canonical_string(&f).contains("reporter_id"));

        let bad = "{\"reporter\":\"internal\",\"description\":\"x\",\"severity\":\"extreme\"}";
        assert!(matches!(
            parse_finding_lines(bad),
            Err(IdentificationError::Intake { line: 1, .. })
        ));
    }
}
