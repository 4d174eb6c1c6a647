use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::governance::{
    escalate, resolve, ActionKind, Approval, ApprovalOutcome, EscalationEvent, EscalationSeverity,
    EscalationSource, Governance,
};
use crate::identification::{
    advance_finding, annotate_finding, edit_finding, exclude_risk, import_taxonomy,
    parse_taxonomy_csv, promote_finding, Finding, IdentificationError, RiskDomainEntry,
};
use crate::indicators::{
    capability_points, due_evaluations, effective_kri_value, evaluate_rules, forecast_crossing,
    Elicitation, IndicatorCatalog, IndicatorContext, IndicatorError, IndicatorValue, Measurement,
    RecencyWindow, RuleStatus, ThreeWay,
};
use crate::lifecycle::{self, evaluate_gate, GateContext, GateDecision, LifecycleError, Phase};
use crate::register::{
    build_entry, domain_residuals, export_register, generate_disclosure, AuditKind, AuditLog,
    BreachRecord, Disclosure, DisclosureKind, Period, RegisterEntry, RegisterError,
    RegisterSnapshot,
};
use crate::time::{Clock, Timestamp};
use crate::tolerance::check_compliance;

use super::config::Config;
use super::requests::*;
use super::store::Store;
use super::{GatewayError, Result};

/// Single writer over a register and its audit log. Reads see the last
/// committed snapshot; each successful mutation appends one audit event
/// and commits before it becomes visible.
pub struct Engine {
    config: Config,
    snapshot: Arc<RegisterSnapshot>,
    log: AuditLog,
    store: Option<Store>,
    clock: Box<dyn Clock>,
}

fn actor(a: &str) -> &str {
    if a.trim().is_empty() {
        DEFAULT_ACTOR
    } else {
        a
    }
}

fn upsert_by<T>(items: &mut Vec<T>, item: T, same: impl Fn(&T, &T) -> bool) {
    match items.iter_mut().find(|x| same(x, &item)) {
        Some(slot) => *slot = item,
        None => items.push(item),
    }
}

fn check_measurement(catalog: &IndicatorCatalog, m: &Measurement) -> Result<()> {
    let invalid = |reason: String| IndicatorError::InvalidIndicator {
        indicator: m.indicator_id.clone(),
        reason,
    };
    if let Ok(kri) = catalog.kri(&m.indicator_id) {
        match &m.value {
            IndicatorValue::Number(v) => kri.check_value(*v)?,
            IndicatorValue::Level(l) => {
                return Err(IndicatorError::ValueOutOfScale {
                    indicator: kri.id.clone(),
                    value: l.clone(),
                }
                .into())
            }
        }
    } else {
        catalog.kci(&m.indicator_id)?.level_of(&m.value)?;
    }
    if let Some(c) = m.effective_compute {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("effective compute {c} must be positive")).into());
        }
    }
    if let Some(e) = &m.elicitation {
        if !(1..=3).contains(&e.effort_tier) {
            return Err(invalid(format!("effort tier {} is outside 1..=3", e.effort_tier)).into());
        }
    }
    Ok(())
}

fn upsert_entry(next: &mut RegisterSnapshot, entry: RegisterEntry) {
    if let Some(d) = next.domains.iter_mut().find(|d| d.id == entry.domain_id) {
        if !d.linked_models.contains(&entry.risk_id) {
            d.linked_models.push(entry.risk_id.clone());
        }
    }
    upsert_by(&mut next.entries, entry, |a, b| a.risk_id == b.risk_id);
}

impl Engine {
    pub fn in_memory(config: Config, snapshot: RegisterSnapshot, clock: Box<dyn Clock>) -> Engine {
        Engine {
            config,
            snapshot: Arc::new(snapshot),
            log: AuditLog::new(),
            store: None,
            clock,
        }
    }

    /// Creates a store at `config.store`.
    pub fn init(config: Config, clock: Box<dyn Clock>) -> Result<Engine> {
        config.validate()?;
        let (store, snapshot, log) = Store::init(&config.store.clone(), &config)?;
        Ok(Engine {
            config,
            snapshot: Arc::new(snapshot),
            log,
            store: Some(store),
            clock,
        })
    }

    pub fn open(config: Config, clock: Box<dyn Clock>) -> Result<Engine> {
        config.validate()?;
        let (store, snapshot, log) = Store::open(&config.store.clone())?;
        Ok(Engine {
            config,
            snapshot: Arc::new(snapshot),
            log,
            store: Some(store),
            clock,
        })
    }

    /// Opens the store at `root` with the config saved inside it.
    pub fn open_dir(root: &Path, clock: Box<dyn Clock>) -> Result<Engine> {
        Engine::open(Store::read_config(root)?, clock)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn governance(&self) -> &Governance {
        &self.config.governance
    }

    pub fn snapshot(&self) -> Arc<RegisterSnapshot> {
        Arc::clone(&self.snapshot)
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.log
    }

    pub fn store_mut(&mut self) -> Option<&mut Store> {
        self.store.as_mut()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn set_clock(&mut self, clock: Box<dyn Clock>) {
        self.clock = clock;
    }

    fn window(&self, s: &RegisterSnapshot, now: Timestamp) -> RecencyWindow {
        RecencyWindow {
            now,
            weights_changed_at: s.lifecycle.weights_changed_at,
            fallback_days: self.config.recency_days,
        }
    }

    fn require(&self, action: ActionKind, approvals: &[Approval]) -> Result<()> {
        match self.config.governance.require_approval(action, approvals)? {
            ApprovalOutcome::Allowed => Ok(()),
            ApprovalOutcome::Blocked { block } => Err(GatewayError::ApprovalBlocked(block)),
        }
    }

    fn commit<P: Serialize>(
        &mut self,
        who: &str,
        kind: AuditKind,
        next: RegisterSnapshot,
        payload: &P,
        now: Timestamp,
    ) -> Result<u64> {
        let from = self.log.len();
        let seq = self.log.append(actor(who), kind, payload, now).seq;
        if let Some(store) = self.store.as_mut() {
            if let Err(e) = store.commit(&next, &self.log, from) {
                self.log.truncate(from);
                return Err(e);
            }
        }
        self.snapshot = Arc::new(next);
        Ok(seq)
    }

    /// Re-evaluates every rule into `next`: new breach episodes open an
    /// escalation and raise the hold in the same step; episodes of rules
    /// no longer breached are closed.
    fn apply_evaluation(
        &self,
        next: &mut RegisterSnapshot,
        now: Timestamp,
    ) -> Result<(Vec<RuleStatus>, Vec<EscalationEvent>, Vec<String>)> {
        let window = self.window(next, now);
        let eval = evaluate_rules(
            &next.catalog,
            &next.measurements,
            self.config.enhancement_margin,
            &window,
        )?;
        let mut opened = Vec::new();
        for status in eval.breached() {
            if next.open_breach(&status.rule_id).is_some() {
                continue;
            }
            let id = format!("ESC-{}", next.escalations.len() + 1);
            let event = escalate(
                id.clone(),
                EscalationSource::Rule {
                    rule_id: status.rule_id.clone(),
                },
                EscalationSeverity::High,
                &self.config.governance.tiers,
                now,
            );
            next.breaches.push(BreachRecord {
                rule_id: status.rule_id.clone(),
                detected_at: now,
                escalation_id: id.clone(),
                kri_value: status.kri_value,
                kci_value: status.kci_value.clone(),
                cleared_at: None,
            });
            next.lifecycle.raise_hold(&id, now);
            next.escalations.push(event.clone());
            opened.push(event);
        }
        let breached: BTreeSet<&str> = eval.breached().map(|s| s.rule_id.as_str()).collect();
        let mut cleared = Vec::new();
        for b in next
            .breaches
            .iter_mut()
            .filter(|b| b.cleared_at.is_none() && !breached.contains(b.rule_id.as_str()))
        {
            b.cleared_at = Some(now);
            cleared.push(b.rule_id.clone());
        }
        next.rule_statuses = eval.statuses.clone();
        self.refresh_entries(next, now);
        Ok((eval.statuses, opened, cleared))
    }

    /// Recomputes entry risk levels from current indicators. An entry that
    /// no longer builds keeps its last computed values.
    fn refresh_entries(&self, next: &mut RegisterSnapshot, now: Timestamp) {
        let window = self.window(next, now);
        let refreshed: Vec<RegisterEntry> = next
            .entries
            .iter()
            .map(|e| {
                match build_entry(
                    &e.to_draft(),
                    next,
                    &self.config.governance,
                    self.config.enhancement_margin,
                    &window,
                    now,
                ) {
                    Ok(new)
                        if new.inherent_risk != e.inherent_risk
                            || new.residual_risk != e.residual_risk
                            || new.mapping != e.mapping
                            || new.mitigation_status != e.mitigation_status =>
                    {
                        new
                    }
                    _ => e.clone(),
                }
            })
            .collect();
        next.entries = refreshed;
    }

    pub fn import(&mut self, req: ImportRequest) -> Result<ImportResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let mut needs = BTreeSet::new();

        let mut rows = req.taxonomy.clone();
        if let Some(csv) = &req.taxonomy_csv {
            rows.extend(parse_taxonomy_csv(csv)?);
        }
        let added = import_taxonomy(&rows, &next.domains)?;
        let mut domains_added: Vec<String> = added.iter().map(|d| d.id.clone()).collect();
        next.domains.extend(added);
        for d in &req.domains {
            if !next.domains.iter().any(|x| x.id == d.id) {
                domains_added.push(d.id.clone());
            }
            upsert_by(&mut next.domains, d.clone(), |a, b| a.id == b.id);
        }
        for m in &req.models {
            m.validate()?;
            upsert_by(&mut next.models, m.clone(), |a, b| a.id() == b.id());
        }
        if let Some(catalog) = &req.catalog {
            for k in &catalog.kris {
                upsert_by(&mut next.catalog.kris, k.clone(), |a, b| a.id == b.id);
            }
            for k in &catalog.kcis {
                upsert_by(&mut next.catalog.kcis, k.clone(), |a, b| a.id == b.id);
            }
            for r in &catalog.rules {
                if let Some(old) = next.catalog.rule(&r.id) {
                    if old != r {
                        needs.insert(ActionKind::ThresholdChange);
                    }
                }
                upsert_by(&mut next.catalog.rules, r.clone(), |a, b| a.id == b.id);
            }
        }
        if let Some(budget) = &req.budget {
            budget.validate()?;
            if next.budget.as_ref().is_some_and(|old| old != budget) {
                needs.insert(ActionKind::BudgetReallocation);
            }
            next.budget = Some(budget.clone());
        }
        if let Some(c) = &req.culture_checklist {
            next.culture_checklist = Some(c.clone());
        }
        for action in needs {
            self.require(action, &req.approvals)?;
        }
        next.validate()?;

        let window = self.window(&next, now);
        let mut entries = Vec::new();
        for draft in &req.entries {
            let entry = build_entry(
                draft,
                &next,
                &self.config.governance,
                self.config.enhancement_margin,
                &window,
                now,
            )?;
            entries.push(entry.risk_id.clone());
            upsert_entry(&mut next, entry);
        }
        let response = ImportResponse {
            audit_seq: 0,
            domains_added,
            models: req.models.iter().map(|m| m.id().to_string()).collect(),
            rules: req
                .catalog
                .as_ref()
                .map(|c| c.rules.iter().map(|r| r.id.clone()).collect())
                .unwrap_or_default(),
            entries,
        };
        let payload = json!({"op": "import", "request": req, "result": response});
        let audit_seq = self.commit(&req.actor, AuditKind::Edit, next, &payload, now)?;
        Ok(ImportResponse {
            audit_seq,
            ..response
        })
    }

    pub fn measure(&mut self, req: MeasureRequest) -> Result<EvaluationResponse> {
        if req.measurements.is_empty() {
            return Err(GatewayError::BadRequest("no measurements given".into()));
        }
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        for m in &req.measurements {
            check_measurement(&next.catalog, m)?;
            if let (Some(c), Ok(_)) = (m.effective_compute, next.catalog.kri(&m.indicator_id)) {
                next.schedule
                    .record_evaluation(&m.indicator_id, c, m.timestamp);
            }
        }
        next.measurements.extend(req.measurements.iter().cloned());
        let (statuses, escalations, cleared) = self.apply_evaluation(&mut next, now)?;
        let hold = next.lifecycle.hold.clone();
        let payload = json!({
            "op": "measure",
            "measurements": req.measurements,
            "statuses": statuses,
            "escalations": escalations.iter().map(|e| &e.id).collect::<Vec<_>>(),
            "cleared": cleared,
        });
        let audit_seq = self.commit(&req.actor, AuditKind::Measurement, next, &payload, now)?;
        Ok(EvaluationResponse {
            audit_seq,
            statuses,
            escalations,
            cleared,
            hold,
        })
    }

    pub fn evaluate(&mut self, req: EvaluateRequest) -> Result<EvaluationResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let (statuses, escalations, cleared) = self.apply_evaluation(&mut next, now)?;
        let hold = next.lifecycle.hold.clone();
        let payload = json!({
            "op": "evaluate",
            "statuses": statuses,
            "escalations": escalations.iter().map(|e| &e.id).collect::<Vec<_>>(),
            "cleared": cleared,
        });
        let audit_seq = self.commit(&req.actor, AuditKind::RuleEval, next, &payload, now)?;
        Ok(EvaluationResponse {
            audit_seq,
            statuses,
            escalations,
            cleared,
            hold,
        })
    }

    /// Recomputes residuals and rule statuses under hypothetical indicator
    /// values. Nothing is stored or logged.
    pub fn whatif(&self, req: &WhatIfRequest) -> Result<WhatIfResponse> {
        let now = self.now();
        let mut s = (*self.snapshot).clone();
        let at = s
            .measurements
            .iter()
            .map(|m| m.timestamp)
            .max()
            .map_or(now, |t| t.max(now));
        for (kri_id, value) in &req.kri {
            s.catalog.kri(kri_id)?.check_value(*value)?;
            s.measurements.retain(|m| m.indicator_id != *kri_id);
            let mut m = Measurement::number(kri_id, *value, at);
            m.elicitation = Some(Elicitation {
                method_notes: "what-if override".into(),
                effort_tier: 1,
                includes_posttraining_enhancements: true,
            });
            s.measurements.push(m);
        }
        for (kci_id, value) in &req.kci {
            s.catalog.kci(kci_id)?.level_of(value)?;
            s.measurements.push(Measurement {
                indicator_id: kci_id.clone(),
                value: value.clone(),
                timestamp: at,
                elicitation: None,
                effective_compute: None,
            });
        }
        let margin = self.config.enhancement_margin;
        let window = self.window(&s, now);
        let statuses = evaluate_rules(&s.catalog, &s.measurements, margin, &window)?.statuses;
        let base =
            IndicatorContext::from_measurements(&s.catalog, &s.measurements, margin, &window)?;

        let mut rebuilt = Vec::with_capacity(s.entries.len());
        let mut entries = Vec::with_capacity(s.entries.len());
        for e in &s.entries {
            let entry = build_entry(
                &e.to_draft(),
                &s,
                &self.config.governance,
                margin,
                &window,
                now,
            )?;
            let allocation = s
                .budget
                .as_ref()
                .and_then(|b| b.allocations.get(&entry.domain_id).copied());
            let tolerance = allocation.or_else(|| s.budget.as_ref().map(|b| b.total.max_rate()));
            let mut min_kci = BTreeMap::new();
            if let (Some(chain), Some(tolerance)) = (s.model(&entry.risk_id)?.as_chain(), tolerance)
            {
                for m in &entry.mapping {
                    let Some(rule) = s.catalog.rule(&m.rule_id) else {
                        continue;
                    };
                    let kri = s.catalog.kri(&rule.kri_id)?;
                    let kri_value = effective_kri_value(kri, &s.measurements, margin, &window)
                        .unwrap_or(kri.scale.hi);
                    let solver =
                        ThreeWay::with_indicators(chain, &rule.kri_id, &rule.kci_id, base.clone())?;
                    min_kci.insert(rule.id.clone(), solver.min_kci(tolerance, kri_value)?);
                }
            }
            entries.push(WhatIfEntry {
                risk_id: entry.risk_id.clone(),
                domain_id: entry.domain_id.clone(),
                inherent: entry.inherent_risk.rate,
                residual: entry.residual_risk.rate,
                allocation,
                min_kci,
            });
            rebuilt.push(entry);
        }
        let compliance = s
            .budget
            .as_ref()
            .and_then(|b| check_compliance(b, &domain_residuals(&rebuilt)).ok());
        Ok(WhatIfResponse {
            entries,
            statuses,
            compliance,
        })
    }

    pub fn submit_findings(&mut self, req: FindingsRequest) -> Result<FindingsResponse> {
        if req.findings.is_empty() {
            return Err(GatewayError::BadRequest("no findings given".into()));
        }
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let mut ids = Vec::with_capacity(req.findings.len());
        for intake in &req.findings {
            if intake.description.trim().is_empty() {
                return Err(GatewayError::BadRequest(
                    "finding description is empty".into(),
                ));
            }
            let id = format!("F-{}", next.findings.len() + 1);
            next.findings
                .push(Finding::new(id.clone(), intake.clone(), now));
            ids.push(id);
        }
        let stored: Vec<&Finding> = next.findings[next.findings.len() - ids.len()..]
            .iter()
            .collect();
        let payload = json!({"op": "findings", "findings": stored});
        let audit_seq = self.commit(&req.actor, AuditKind::Edit, next, &payload, now)?;
        Ok(FindingsResponse { audit_seq, ids })
    }

    pub fn update_finding(
        &mut self,
        id: &str,
        req: FindingUpdateRequest,
    ) -> Result<FindingUpdateResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let idx = next
            .findings
            .iter()
            .position(|f| f.id == id)
            .ok_or_else(|| IdentificationError::UnknownFinding(id.to_string()))?;
        let mut task = None;
        let mut promotion = None;
        match &req.update {
            FindingUpdate::Advance { to, notes } => {
                task = advance_finding(&mut next.findings[idx], *to, notes, now)?;
                if let Some(t) = &task {
                    if !next.tasks.iter().any(|x| x.id == t.id) {
                        next.tasks.push(t.clone());
                    }
                }
            }
            FindingUpdate::Edit { edit } => edit_finding(&mut next.findings[idx], edit.clone())?,
            FindingUpdate::Annotate { by, text } => {
                if text.trim().is_empty() {
                    return Err(GatewayError::BadRequest("annotation text is empty".into()));
                }
                annotate_finding(&mut next.findings[idx], by, text, now);
            }
            FindingUpdate::Promote {
                model_id,
                domain_id,
            } => {
                let RegisterSnapshot {
                    findings, domains, ..
                } = &mut next;
                promotion = Some(promote_finding(
                    &mut findings[idx],
                    domains,
                    model_id,
                    domain_id.as_deref(),
                )?);
            }
        }
        let stage = next.findings[idx].stage;
        let payload = json!({"op": "finding", "finding_id": id, "update": req.update, "task": task, "promotion": promotion});
        let audit_seq = self.commit(&req.actor, AuditKind::Edit, next, &payload, now)?;
        Ok(FindingUpdateResponse {
            audit_seq,
            stage,
            task,
            promotion,
        })
    }

    pub fn exclude(&mut self, domain_id: &str, req: ExcludeRequest) -> Result<RiskDomainEntry> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let approver = self.config.governance.role(&req.approver)?.clone();
        let approvals = if req.approvals.is_empty() {
            vec![Approval::approve(&approver.id)]
        } else {
            req.approvals.clone()
        };
        self.require(ActionKind::Exclusion, &approvals)?;
        let domain = next
            .domains
            .iter_mut()
            .find(|d| d.id == domain_id)
            .ok_or_else(|| IdentificationError::UnknownDomain(domain_id.to_string()))?;
        exclude_risk(domain, &req.justification, &approver)?;
        let domain = domain.clone();
        let payload = json!({"op": "exclude", "domain_id": domain_id, "justification": req.justification, "approvals": approvals});
        self.commit(&approver.id, AuditKind::Exclusion, next, &payload, now)?;
        Ok(domain)
    }

    pub fn upsert_entry(&mut self, req: EntryRequest) -> Result<EntryResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let window = self.window(&next, now);
        let entry = build_entry(
            &req.entry,
            &next,
            &self.config.governance,
            self.config.enhancement_margin,
            &window,
            now,
        )?;
        upsert_entry(&mut next, entry.clone());
        let payload = json!({"op": "entry", "entry": entry});
        let audit_seq = self.commit(&req.actor, AuditKind::Edit, next, &payload, now)?;
        Ok(EntryResponse { audit_seq, entry })
    }

    pub fn evaluate_gate(&self, target: Phase, approvals: &[Approval]) -> Result<GateDecision> {
        let now = self.now();
        let s = &self.snapshot;
        let ctx = GateContext {
            governance: &self.config.governance,
            approvals,
            margin: self.config.enhancement_margin,
            window: self.window(s, now),
        };
        Ok(evaluate_gate(s, target, &ctx)?)
    }

    pub fn transition(&mut self, target: Phase, req: GateRequest) -> Result<TransitionResponse> {
        let now = self.now();
        if let Some(hold) = &self.snapshot.lifecycle.hold {
            return Err(LifecycleError::HoldActive {
                since: hold.since,
                escalations: hold.escalations.clone(),
            }
            .into());
        }
        let decision = self.evaluate_gate(target, &req.approvals)?;
        let mut next = (*self.snapshot).clone();
        lifecycle::transition(&mut next.lifecycle, &decision, now)?;
        let payload = json!({"op": "transition", "decision": decision});
        let audit_seq = self.commit(&req.actor, AuditKind::Gate, next, &payload, now)?;
        Ok(TransitionResponse {
            audit_seq,
            phase: target,
            decision,
        })
    }

    /// Resolves an escalation. Escalations holding development need
    /// hold-release approval; resolving one removes it from the hold.
    pub fn resolve_escalation(&mut self, id: &str, req: ResolveRequest) -> Result<ResolveResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        self.config.governance.role(&req.by)?;
        if req.decision.trim().is_empty() {
            return Err(GatewayError::BadRequest(
                "resolution decision is empty".into(),
            ));
        }
        let held = next
            .lifecycle
            .hold
            .as_ref()
            .is_some_and(|h| h.escalations.iter().any(|e| e == id));
        let event = next
            .escalations
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| crate::governance::GovernanceError::UnknownEscalation(id.to_string()))?;
        if held || matches!(event.source, EscalationSource::Rule { .. }) {
            self.require(ActionKind::HoldRelease, &req.approvals)?;
        }
        resolve(event, &req.by, now, &req.decision)?;
        let escalation = event.clone();
        next.lifecycle.release_hold(id);
        let hold = next.lifecycle.hold.clone();
        let payload = json!({"op": "resolve", "escalation_id": id, "decision": req.decision, "approvals": req.approvals});
        let audit_seq = self.commit(&req.by, AuditKind::Escalation, next, &payload, now)?;
        Ok(ResolveResponse {
            audit_seq,
            escalation,
            hold,
        })
    }

    pub fn reallocate_budget(&mut self, req: ReallocateRequest) -> Result<ReallocateResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        self.require(ActionKind::BudgetReallocation, &req.approvals)?;
        let budget = next
            .budget
            .as_mut()
            .ok_or(RegisterError::MissingField("budget"))?;
        budget.reallocate(req.shares.clone())?;
        let budget = budget.clone();
        let who = req
            .approvals
            .first()
            .map_or(DEFAULT_ACTOR, |a| a.role_id.as_str())
            .to_string();
        let payload = json!({"op": "reallocate", "shares": req.shares, "approvals": req.approvals});
        let audit_seq = self.commit(&who, AuditKind::Approval, next, &payload, now)?;
        Ok(ReallocateResponse { audit_seq, budget })
    }

    pub fn update_lifecycle(&mut self, req: LifecycleRequest) -> Result<LifecycleResponse> {
        let now = self.now();
        let mut next = (*self.snapshot).clone();
        let state = &mut next.lifecycle;
        match &req.update {
            LifecycleUpdate::RecordCompute { compute } => state.record_compute(*compute, now)?,
            LifecycleUpdate::PlanCompute { compute } => {
                if !(compute.is_finite() && *compute > 0.0) {
                    return Err(LifecycleError::InvalidCompute(*compute).into());
                }
                state.planned_compute = Some(*compute);
            }
            LifecycleUpdate::SetModelLabel { model_label } => {
                if model_label.trim().is_empty() {
                    return Err(GatewayError::BadRequest("model label is empty".into()));
                }
                state.model_label = model_label.clone();
            }
            LifecycleUpdate::PlanMitigation { mitigation } => {
                next.catalog
                    .kci(&mitigation.kci_id)?
                    .level_index(&mitigation.level)?;
                upsert_by(
                    &mut state.planned_mitigations,
                    mitigation.clone(),
                    |a, b| a.kci_id == b.kci_id,
                );
            }
            LifecycleUpdate::RedTeam { record } => {
                if state.red_team_records.iter().any(|r| r.id == record.id) {
                    return Err(RegisterError::DuplicateId(record.id.clone()).into());
                }
                state.red_team_records.push(record.clone());
            }
        }
        let lifecycle = next.lifecycle.clone();
        let payload = json!({"op": "lifecycle", "update": req.update});
        let audit_seq = self.commit(&req.actor, AuditKind::Edit, next, &payload, now)?;
        Ok(LifecycleResponse {
            audit_seq,
            lifecycle,
        })
    }

    pub fn register_bytes(&self) -> Vec<u8> {
        export_register(&self.snapshot)
    }

    pub fn risk(&self, id: &str) -> Result<RegisterEntry> {
        Ok(self.snapshot.entry(id)?.clone())
    }

    pub fn solve(&self, req: &SolveRequest) -> Result<SolveResponse> {
        let s = &self.snapshot;
        let model = s.model(&req.model)?;
        let chain = model.as_chain().ok_or_else(|| {
            GatewayError::BadRequest(format!("model `{}` is not a scenario chain", req.model))
        })?;
        let rule = s.catalog.rules.iter().find(|r| r.linked_model == req.model);
        let solver = match rule {
            Some(r) => ThreeWay::with_indicators(
                chain,
                &r.kri_id,
                &r.kci_id,
                IndicatorContext::new(&s.catalog),
            )?,
            None => ThreeWay::new(chain, &s.catalog)?,
        };
        let tolerance = match req.tolerance {
            Some(t) => t,
            None => {
                let domain = rule
                    .map(|r| r.tolerance_ref.clone())
                    .or_else(|| s.entry(&req.model).ok().map(|e| e.domain_id.clone()));
                s.budget
                    .as_ref()
                    .zip(domain)
                    .and_then(|(b, d)| b.allocations.get(&d).copied())
                    .ok_or_else(|| {
                        GatewayError::BadRequest(format!(
                            "no tolerance given and no allocation for `{}`",
                            req.model
                        ))
                    })?
            }
        };
        match (req.kri, &req.level) {
            (Some(kri), None) => Ok(SolveResponse::MinKci {
                model: req.model.clone(),
                tolerance,
                kri,
                result: solver.min_kci(tolerance, kri)?,
            }),
            (None, Some(level)) => Ok(SolveResponse::MaxKri {
                model: req.model.clone(),
                tolerance,
                level: level.clone(),
                result: solver.max_kri(tolerance, level)?,
            }),
            _ => Err(GatewayError::BadRequest(
                "give exactly one of `kri` and `level`".into(),
            )),
        }
    }

    pub fn forecast(&self, kri_id: &str, threshold: Option<f64>) -> Result<ForecastResponse> {
        let s = &self.snapshot;
        let kri = s.catalog.kri(kri_id)?;
        let threshold = threshold
            .or_else(|| kri.thresholds.first().copied())
            .or_else(|| {
                s.catalog
                    .rules
                    .iter()
                    .find(|r| r.kri_id == kri_id)
                    .map(|r| r.kri_threshold)
            })
            .ok_or_else(|| {
                GatewayError::BadRequest(format!("KRI `{kri_id}` has no threshold; give one"))
            })?;
        let forecast = forecast_crossing(&capability_points(kri_id, &s.measurements), threshold)?;
        Ok(ForecastResponse {
            kri_id: kri_id.to_string(),
            threshold,
            fit: forecast.fit,
            crossing: forecast.crossing,
        })
    }

    pub fn disclosure(&self, kind: DisclosureKind, period: Option<Period>) -> Result<Disclosure> {
        let period = period.unwrap_or(Period {
            from: Timestamp(0),
            to: self.now(),
        });
        Ok(generate_disclosure(
            kind,
            period,
            &self.snapshot,
            &self.config.governance,
        )?)
    }

    pub fn due(&self) -> Result<DueResponse> {
        let now = self.now();
        let s = &self.snapshot;
        let compute = s.lifecycle.effective_compute;
        let current: BTreeMap<String, f64> = s
            .catalog
            .kris
            .iter()
            .filter(|k| k.kind == crate::indicators::KriKind::InternalCapability)
            .map(|k| (k.id.clone(), compute))
            .filter(|(_, c)| *c > 0.0)
            .collect();
        Ok(DueResponse {
            now,
            due: due_evaluations(&s.schedule, now, &current)?,
        })
    }

    /// Verifies the log on disk against the committed head, or the
    /// in-memory log when there is no store.
    pub fn verify(&self) -> Result<VerifyReport> {
        match &self.store {
            Some(store) => Store::verify_files(store.root()),
            None => {
                let broken = self.log.verify().err();
                Ok(VerifyReport {
                    ok: broken.is_none(),
                    head: self.log.head(),
                    broken,
                })
            }
        }
    }
}
