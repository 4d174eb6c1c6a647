use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RegisterError, RegisterSnapshot, Result};
use crate::governance::{Governance, RoleKind};
use crate::identification::ActionItem;
use crate::indicators::{
    current_kci_level, IndicatorContext, IndicatorValue, KciRequirement, RecencyWindow,
};
use crate::numeric::exact_sum;
use crate::riskmodel::{chain_residual_rate, QuantifiedRisk, RiskModel};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationStatus {
    pub kci_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<IndicatorValue>,
    pub operational: bool,
}

/// A rule covering this risk and the residual rate expected when its KRI
/// sits at the threshold and its KCI at the required level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMapping {
    pub rule_id: String,
    pub expected_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionPlan {
    pub actions: Vec<ActionItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterEntry {
    /// Id of the risk model this entry tracks.
    pub risk_id: String,
    pub domain_id: String,
    /// Role id of the accountable risk owner.
    pub risk_owner: String,
    /// Rate with every KCI at its weakest level.
    pub inherent_risk: QuantifiedRisk,
    /// Rate with operational KCIs at their current level.
    pub residual_risk: QuantifiedRisk,
    pub kris: Vec<String>,
    pub mitigation_status: Vec<MitigationStatus>,
    pub mapping: Vec<RuleMapping>,
    pub action_plan: ActionPlan,
    pub updated_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationDraft {
    pub kci_id: String,
    pub operational: bool,
}

/// Input for creating or updating an entry. Risk levels and current KCI
/// values are computed, not supplied.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDraft {
    pub risk_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kris: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation_status: Option<Vec<MitigationDraft>>,
    /// Rule ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_plan: Option<ActionPlan>,
}

fn check_owner(governance: &Governance, owner: &str) -> Result<()> {
    let reject = |reason: String| RegisterError::UnknownOwner {
        owner: owner.to_string(),
        reason,
    };
    let role = governance
        .role(owner)
        .map_err(|_| reject("no such role".into()))?;
    if role.kind != RoleKind::RiskOwner {
        return Err(reject(format!(
            "role kind is {}, not risk_owner",
            role.kind
        )));
    }
    if governance
        .roles
        .iter()
        .any(|r| r.person == role.person && r.kind == RoleKind::Cro)
    {
        return Err(reject(format!(
            "{} is the CRO and cannot own risks",
            role.person
        )));
    }
    Ok(())
}

/// KRI values for quantification: effective values from the measurements,
/// the scale maximum for unmeasured KRIs.
fn kri_context<'a>(
    snapshot: &'a RegisterSnapshot,
    model: &RiskModel,
    margin: f64,
    window: &RecencyWindow,
) -> Result<IndicatorContext<'a>> {
    let mut ctx = IndicatorContext::from_measurements(
        &snapshot.catalog,
        &snapshot.measurements,
        margin,
        window,
    )?;
    ctx.kci_levels.clear();
    if let Some(chain) = model.as_chain() {
        for kri_id in chain.kri_ids() {
            if !ctx.kri_values.contains_key(kri_id) {
                let hi = snapshot.catalog.kri(kri_id)?.scale.hi;
                ctx.kri_values.insert(kri_id.to_string(), hi);
            }
        }
        for kci_id in chain.kci_ids() {
            snapshot.catalog.kci(kci_id)?;
            ctx.kci_levels.insert(kci_id.to_string(), 0);
        }
    }
    Ok(ctx)
}

/// Validates a draft against the register and governance and computes
/// its risk levels.
pub fn build_entry(
    draft: &EntryDraft,
    snapshot: &RegisterSnapshot,
    governance: &Governance,
    margin: f64,
    window: &RecencyWindow,
    now: Timestamp,
) -> Result<RegisterEntry> {
    let owner = draft
        .risk_owner
        .as_ref()
        .ok_or(RegisterError::MissingField("risk_owner"))?;
    let kris = draft
        .kris
        .as_ref()
        .ok_or(RegisterError::MissingField("kris"))?;
    let mitigations = draft
        .mitigation_status
        .as_ref()
        .ok_or(RegisterError::MissingField("mitigation_status"))?;
    let mapping_ids = draft
        .mapping
        .as_ref()
        .ok_or(RegisterError::MissingField("mapping"))?;
    let action_plan = draft
        .action_plan
        .as_ref()
        .ok_or(RegisterError::MissingField("action_plan"))?;
    check_owner(governance, owner)?;
    let model = snapshot.model(&draft.risk_id)?;
    let catalog = &snapshot.catalog;

    let mut rules = Vec::with_capacity(mapping_ids.len());
    for id in mapping_ids {
        let rule = catalog
            .rule(id)
            .ok_or_else(|| RegisterError::UnknownRule(id.clone()))?;
        if rule.linked_model != draft.risk_id {
            return Err(RegisterError::InvalidMapping {
                rule: id.clone(),
                reason: format!("rule is linked to model `{}`", rule.linked_model),
            });
        }
        rules.push(rule);
    }
    for kri in kris {
        catalog.kri(kri)?;
        if !rules.iter().any(|r| &r.kri_id == kri) {
            return Err(RegisterError::UnmappedKri(kri.clone()));
        }
    }

    let inherent_ctx = kri_context(snapshot, model, margin, window)?;
    let mut residual_ctx = inherent_ctx.clone();
    let mut mitigation_status = Vec::with_capacity(mitigations.len());
    for m in mitigations {
        let kci = catalog.kci(&m.kci_id)?;
        let level = current_kci_level(kci, &snapshot.measurements)?;
        if m.operational {
            if let Some(level) = level {
                if residual_ctx.kci_levels.contains_key(&m.kci_id) {
                    residual_ctx.set_kci_index(&m.kci_id, level);
                }
            }
        }
        let current = snapshot
            .measurements
            .iter()
            .enumerate()
            .filter(|(_, x)| x.indicator_id == m.kci_id)
            .max_by_key(|(i, x)| (x.timestamp, *i))
            .map(|(_, x)| x.value.clone());
        mitigation_status.push(MitigationStatus {
            kci_id: m.kci_id.clone(),
            current,
            operational: m.operational,
        });
    }

    let inherent = model.quantify(&inherent_ctx)?;
    let residual = model.quantify(&residual_ctx)?;
    if residual.rate > inherent.rate {
        return Err(RegisterError::ResidualExceedsInherent {
            residual: residual.rate,
            inherent: inherent.rate,
        });
    }

    let mut mapping = Vec::with_capacity(rules.len());
    for rule in rules {
        let expected = match model.as_chain() {
            Some(chain) => {
                let mut ctx = residual_ctx.clone();
                ctx.kri_values
                    .insert(rule.kri_id.clone(), rule.kri_threshold);
                let kci = catalog.kci(&rule.kci_id)?;
                let level = match &rule.required {
                    KciRequirement::Level { level } => kci.level_index(level)?,
                    KciRequirement::AtMost { .. } => 1,
                };
                ctx.set_kci_index(&rule.kci_id, level);
                chain_residual_rate(chain, &ctx)
                    .map_err(|e| RegisterError::InvalidMapping {
                        rule: rule.id.clone(),
                        reason: e.to_string(),
                    })?
                    .rate
            }
            None => residual.rate,
        };
        mapping.push(RuleMapping {
            rule_id: rule.id.clone(),
            expected_residual: expected,
        });
    }

    let domain_id = draft
        .domain_id
        .clone()
        .or_else(|| {
            snapshot
                .domains
                .iter()
                .find(|d| d.linked_models.contains(&draft.risk_id))
                .map(|d| d.id.clone())
        })
        .or_else(|| {
            mapping_ids
                .first()
                .and_then(|r| catalog.rule(r))
                .map(|r| r.tolerance_ref.clone())
        })
        .unwrap_or_else(|| draft.risk_id.clone());

    Ok(RegisterEntry {
        risk_id: draft.risk_id.clone(),
        domain_id,
        risk_owner: owner.clone(),
        inherent_risk: inherent,
        residual_risk: residual,
        kris: kris.clone(),
        mitigation_status,
        mapping,
        action_plan: action_plan.clone(),
        updated_at: now,
    })
}

impl RegisterEntry {
    pub fn to_draft(&self) -> EntryDraft {
        EntryDraft {
            risk_id: self.risk_id.clone(),
            domain_id: Some(self.domain_id.clone()),
            risk_owner: Some(self.risk_owner.clone()),
            kris: Some(self.kris.clone()),
            mitigation_status: Some(
                self.mitigation_status
                    .iter()
                    .map(|m| MitigationDraft {
                        kci_id: m.kci_id.clone(),
                        operational: m.operational,
                    })
                    .collect(),
            ),
            mapping: Some(self.mapping.iter().map(|m| m.rule_id.clone()).collect()),
            action_plan: Some(self.action_plan.clone()),
        }
    }
}

/// Residual risk per domain: the sum of its entries' residual rates.
pub fn domain_residuals(entries: &[RegisterEntry]) -> BTreeMap<String, QuantifiedRisk> {
    let mut by_domain: BTreeMap<String, Vec<&RegisterEntry>> = BTreeMap::new();
    for e in entries {
        by_domain.entry(e.domain_id.clone()).or_default().push(e);
    }
    by_domain
        .into_iter()
        .map(|(d, es)| {
            let rate = exact_sum(es.iter().map(|e| e.residual_risk.rate));
            (
                d,
                QuantifiedRisk::point(rate, es[0].residual_risk.severity.clone()),
            )
        })
        .collect()
}
