//! Random operation sequences against an engine holding the CYBER-1
//! register.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use riskctl_core::fixtures::{self, CYBENCH, CYBER_OWNER, SECURITY_LEVEL};
use riskctl_core::gateway::{
    Config, Engine, EntryRequest, EvaluateRequest, FindingUpdate, FindingUpdateRequest,
    FindingsRequest, GateRequest, GatewayError, LifecycleRequest, LifecycleUpdate, MeasureRequest,
    ReallocateRequest, ResolveRequest,
};
use riskctl_core::governance::Approval;
use riskctl_core::identification::{
    FindingIntake, FindingSeverity, FindingStage, Fishbone, FishboneCategory, ReporterKind,
};
use riskctl_core::indicators::{Elicitation, Measurement};
use riskctl_core::lifecycle::{Phase, PlannedMitigation, RedTeamRecord};
use riskctl_core::time::{FixedClock, Timestamp};

pub const ROLES: [&str; 5] = [
    "owner-cyber",
    "cro",
    "vp-eng",
    "internal-audit",
    "audit-committee",
];
pub const LEVELS: [&str; 4] = ["L1", "L2", "L3", "L4"];

pub fn config() -> Config {
    Config {
        governance: fixtures::governance(),
        ..Config::default()
    }
}

/// In-memory engine with the CYBER-1 register and its entry.
pub fn cyber1_engine(now: Timestamp) -> Engine {
    let mut e = Engine::in_memory(
        config(),
        fixtures::cyber1_register(),
        Box::new(FixedClock(now)),
    );
    e.upsert_entry(EntryRequest {
        actor: CYBER_OWNER.into(),
        entry: fixtures::cyber1_entry_draft(),
    })
    .expect("fixture entry builds");
    e
}

#[derive(Debug, Clone)]
pub enum Op {
    MeasureKri {
        value: f64,
        enhanced: Option<bool>,
        compute: Option<f64>,
    },
    MeasureKci {
        level: String,
    },
    Evaluate,
    Resolve {
        id: String,
        by: String,
        approvals: Vec<String>,
    },
    Transition {
        target: Phase,
        approvals: Vec<String>,
    },
    PlanMitigation {
        level: String,
    },
    PlanCompute {
        compute: f64,
    },
    RecordCompute {
        compute: f64,
    },
    RedTeam {
        id: String,
        label: String,
        open_ended: bool,
    },
    Finding {
        severity: FindingSeverity,
        text: String,
        anonymous: bool,
    },
    AdvanceFinding {
        id: String,
        to: FindingStage,
        notes: String,
    },
    EditFishbone {
        id: String,
    },
    Promote {
        id: String,
    },
    Reallocate {
        cyber: f64,
        cbrn: f64,
        approvals: Vec<String>,
    },
}

impl Op {
    pub fn is_transition(&self) -> bool {
        matches!(self, Op::Transition { .. })
    }
}

/// Text with characters that need escaping or multi-byte encoding.
pub fn text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = [
        "model", "weights", "exfil", " ", "\"", "\\", "\n", "ü", "漢字", "🚀", "\u{7f}", "{}",
    ];
    let n = rng.random_range(1..8);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

pub fn approvals(rng: &mut ChaCha8Rng, p: f64) -> Vec<String> {
    ROLES
        .iter()
        .filter(|r| rng.random_bool(if r.contains("audit") { p / 4.0 } else { p }))
        .map(|r| r.to_string())
        .collect()
}

/// A walk over engine operations with a clock that only moves forward.
pub struct Walk {
    pub rng: ChaCha8Rng,
    pub now: Timestamp,
    red_teams: u32,
}

impl Walk {
    pub fn new(rng: ChaCha8Rng, now: Timestamp) -> Self {
        Walk {
            rng,
            now,
            red_teams: 0,
        }
    }

    pub fn next_op(&mut self, e: &Engine) -> Op {
        self.now = self.now.plus_secs(self.rng.random_range(1..3 * 86_400));
        let s = e.snapshot();
        let rng = &mut self.rng;
        match rng.random_range(0..100) {
            0..=17 => Op::MeasureKri {
                value: match rng.random_range(0..4) {
                    0 => 60.0,
                    1 => rng.random_range(55.0..65.0),
                    _ => rng.random_range(0.0..100.0),
                },
                enhanced: [None, Some(true), Some(false)]
                    .choose(rng)
                    .copied()
                    .unwrap(),
                compute: rng
                    .random_bool(0.3)
                    .then(|| 10f64.powf(rng.random_range(22.0..26.0))),
            },
            18..=31 => Op::MeasureKci {
                level: LEVELS.choose(rng).unwrap().to_string(),
            },
            32..=35 => Op::Evaluate,
            36..=47 => {
                let open: Vec<&str> = s
                    .escalations
                    .iter()
                    .filter(|x| x.is_open())
                    .map(|x| x.id.as_str())
                    .collect();
                let id = match open.choose(rng) {
                    Some(id) if rng.random_bool(0.9) => id.to_string(),
                    _ => format!("ESC-{}", rng.random_range(1..5)),
                };
                Op::Resolve {
                    id,
                    by: ["cro", "vp-eng", "owner-cyber"]
                        .choose(rng)
                        .unwrap()
                        .to_string(),
                    approvals: approvals(rng, 0.7),
                }
            }
            48..=65 => Op::Transition {
                target: match s.lifecycle.phase.next() {
                    Some(next) if rng.random_bool(0.95) => next,
                    _ => *[Phase::Planning, Phase::Training, Phase::Deployed]
                        .choose(rng)
                        .unwrap(),
                },
                approvals: approvals(rng, 0.75),
            },
            66..=71 => Op::PlanMitigation {
                level: LEVELS.choose(rng).unwrap().to_string(),
            },
            72..=73 => Op::PlanCompute {
                compute: 10f64.powf(rng.random_range(23.0..26.0)),
            },
            74..=77 => Op::RecordCompute {
                compute: s.lifecycle.effective_compute * rng.random_range(0.5..4.0)
                    + rng.random_range(0.0..1e24),
            },
            78..=82 => {
                self.red_teams += 1;
                Op::RedTeam {
                    id: format!("RT-{}", self.red_teams),
                    label: if rng.random_bool(0.8) {
                        s.lifecycle.model_label.clone()
                    } else {
                        "other-model".into()
                    },
                    open_ended: rng.random_bool(0.7),
                }
            }
            83..=87 => Op::Finding {
                severity: *[
                    FindingSeverity::Low,
                    FindingSeverity::Medium,
                    FindingSeverity::High,
                ]
                .choose(rng)
                .unwrap(),
                text: text(rng),
                anonymous: rng.random_bool(0.3),
            },
            88..=94 if !s.findings.is_empty() => {
                let f = s.findings.choose(rng).unwrap();
                let id = f.id.clone();
                match rng.random_range(0..3) {
                    0 => Op::EditFishbone { id },
                    1 => Op::Promote { id },
                    _ => Op::AdvanceFinding {
                        id,
                        to: *[
                            FindingStage::Triaged,
                            FindingStage::Investigating,
                            FindingStage::Confirmed,
                            FindingStage::Dismissed,
                        ]
                        .choose(rng)
                        .unwrap(),
                        notes: if rng.random_bool(0.8) {
                            text(rng)
                        } else {
                            String::new()
                        },
                    },
                }
            }
            _ => Op::Reallocate {
                cyber: rng.random_range(0.001..0.008),
                cbrn: rng.random_range(0.001..0.006),
                approvals: approvals(rng, 0.7),
            },
        }
    }
}

fn approve(roles: &[String]) -> Vec<Approval> {
    roles.iter().map(|r| Approval::approve(r)).collect()
}

/// Applies `op` at time `now`.
pub fn apply(e: &mut Engine, op: &Op, now: Timestamp) -> Result<(), GatewayError> {
    e.set_clock(Box::new(FixedClock(now)));
    let actor = "walk".to_string();
    match op {
        Op::MeasureKri {
            value,
            enhanced,
            compute,
        } => {
            let mut m = Measurement::number(CYBENCH, *value, now);
            m.elicitation = enhanced.map(|enh| Elicitation {
                method_notes: String::new(),
                effort_tier: 2,
                includes_posttraining_enhancements: enh,
            });
            m.effective_compute = *compute;
            e.measure(MeasureRequest {
                actor,
                measurements: vec![m],
            })
            .map(drop)
        }
        Op::MeasureKci { level } => e
            .measure(MeasureRequest {
                actor,
                measurements: vec![Measurement::level(SECURITY_LEVEL, level, now)],
            })
            .map(drop),
        Op::Evaluate => e.evaluate(EvaluateRequest { actor }).map(drop),
        Op::Resolve { id, by, approvals } => e
            .resolve_escalation(
                id,
                ResolveRequest {
                    by: by.clone(),
                    decision: "controls raised".into(),
                    approvals: approve(approvals),
                },
            )
            .map(drop),
        Op::Transition { target, approvals } => e
            .transition(
                *target,
                GateRequest {
                    actor,
                    approvals: approve(approvals),
                },
            )
            .map(drop),
        Op::PlanMitigation { level } => lifecycle(
            e,
            LifecycleUpdate::PlanMitigation {
                mitigation: PlannedMitigation {
                    kci_id: SECURITY_LEVEL.into(),
                    level: level.clone(),
                    notes: String::new(),
                },
            },
        ),
        Op::PlanCompute { compute } => {
            lifecycle(e, LifecycleUpdate::PlanCompute { compute: *compute })
        }
        Op::RecordCompute { compute } => {
            lifecycle(e, LifecycleUpdate::RecordCompute { compute: *compute })
        }
        Op::RedTeam {
            id,
            label,
            open_ended,
        } => lifecycle(
            e,
            LifecycleUpdate::RedTeam {
                record: RedTeamRecord {
                    id: id.clone(),
                    model_label: label.clone(),
                    at: now,
                    open_ended: *open_ended,
                    summary: String::new(),
                },
            },
        ),
        Op::Finding {
            severity,
            text,
            anonymous,
        } => e
            .submit_findings(FindingsRequest {
                actor,
                findings: vec![FindingIntake {
                    reporter: if *anonymous {
                        ReporterKind::ThirdParty
                    } else {
                        ReporterKind::Internal
                    },
                    reporter_id: (!*anonymous).then(|| "researcher-7".to_string()),
                    description: text.clone(),
                    severity: *severity,
                    fishbone: None,
                }],
            })
            .map(drop),
        Op::AdvanceFinding { id, to, notes } => finding(
            e,
            id,
            FindingUpdate::Advance {
                to: *to,
                notes: notes.clone(),
            },
        ),
        Op::EditFishbone { id } => finding(
            e,
            id,
            FindingUpdate::Edit {
                edit: riskctl_core::identification::FindingEdit {
                    fishbone: Some(Fishbone {
                        category: FishboneCategory::Model,
                        cause_notes: "capability jump".into(),
                    }),
                    ..Default::default()
                },
            },
        ),
        Op::Promote { id } => finding(
            e,
            id,
            FindingUpdate::Promote {
                model_id: fixtures::CYBER1.into(),
                domain_id: None,
            },
        ),
        Op::Reallocate {
            cyber,
            cbrn,
            approvals,
        } => e
            .reallocate_budget(ReallocateRequest {
                shares: BTreeMap::from([
                    (fixtures::CYBER_DOMAIN.to_string(), *cyber),
                    ("cbrn".to_string(), *cbrn),
                ]),
                approvals: approve(approvals),
            })
            .map(drop),
    }
}

fn lifecycle(e: &mut Engine, update: LifecycleUpdate) -> Result<(), GatewayError> {
    e.update_lifecycle(LifecycleRequest {
        actor: "walk".into(),
        update,
    })
    .map(drop)
}

fn finding(e: &mut Engine, id: &str, update: FindingUpdate) -> Result<(), GatewayError> {
    e.update_finding(
        id,
        FindingUpdateRequest {
            actor: "walk".into(),
            update,
        },
    )
    .map(drop)
}
