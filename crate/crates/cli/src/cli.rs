//! Command line front end. Every command runs the same engine call the HTTP
//! API makes for the equivalent request.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use riskctl_core::canonical::to_canonical;
use riskctl_core::gateway::{
    decode_records, decode_request, Config, Engine, EvaluateRequest, EvaluationResponse,
    FindingsRequest, GateRequest, GatewayError, ImportRequest, LifecycleRequest, MeasureRequest,
    ResolveRequest, Result, SolveRequest, SolveResponse, Store, WhatIfRequest,
};
use riskctl_core::governance::Approval;
use riskctl_core::indicators::{
    Crossing, Elicitation, IndicatorValue, MaxKri, Measurement, MinKci,
};
use riskctl_core::lifecycle::{GateDecision, GateResult, Phase};
use riskctl_core::register::{DisclosureKind, Period};
use riskctl_core::time::{SystemClock, Timestamp};

#[derive(Debug, Parser)]
#[command(
    name = "riskctl",
    version,
    about = "Quantitative risk register for frontier AI development"
)]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, default_value = ".")]
    pub store: PathBuf,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Canonical,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty store.
    Init {
        /// Config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Merge taxonomy, models, indicators, rules, budget and entries. A
    /// `.csv` file is read as a `name,source` taxonomy.
    Import {
        file: PathBuf,
        #[command(flatten)]
        actor: ActorArg,
        /// Approving role ids, for changes that need approval.
        #[arg(long = "approve")]
        approvals: Vec<String>,
    },
    /// Record measurements and re-evaluate the rules.
    Measure(MeasureArgs),
    /// Re-evaluate every rule.
    Evaluate {
        #[command(flatten)]
        actor: ActorArg,
    },
    /// Solve for the weakest KCI level (`--kri`) or the largest KRI value
    /// (`--level`) within tolerance.
    Solve {
        #[arg(long)]
        model: String,
        /// Per-year tolerance; defaults to the model's budget allocation.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, required_unless_present = "level", conflicts_with = "level")]
        kri: Option<f64>,
        #[arg(long)]
        level: Option<String>,
    },
    /// Forecast the compute at which a capability KRI crosses a threshold.
    Forecast {
        #[arg(long)]
        kri: String,
        /// Defaults to the KRI's first threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Evaluate or pass a lifecycle gate.
    Gate {
        #[command(subcommand)]
        command: GateCommand,
    },
    /// Recompute residuals under hypothetical indicator values. Read-only.
    Whatif { file: PathBuf },
    /// Submit findings from a JSON request or newline-delimited intake file.
    Findings {
        file: PathBuf,
        #[command(flatten)]
        actor: ActorArg,
    },
    /// Apply a lifecycle update: record or plan compute, plan a
    /// mitigation, record red-teaming, or set the model label.
    Lifecycle {
        file: PathBuf,
        #[command(flatten)]
        actor: ActorArg,
    },
    /// Resolve an escalation.
    Resolve {
        id: String,
        /// Resolving role id.
        #[arg(long)]
        by: String,
        #[arg(long)]
        decision: String,
        #[arg(long = "approve")]
        approvals: Vec<String>,
    },
    /// Generate a disclosure: risk, governance or incident.
    Report {
        kind: DisclosureKind,
        /// Period start, seconds since the epoch.
        #[arg(long)]
        from: Option<i64>,
        /// Period end, seconds since the epoch; defaults to now.
        #[arg(long)]
        to: Option<i64>,
    },
    /// Print the register document.
    Export,
    /// Verify the audit chain.
    Verify,
    /// Serve the HTTP API.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ActorArg {
    /// Actor recorded in the audit log.
    #[arg(long, default_value = "cli")]
    pub actor: String,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["file", "indicator"]))]
pub struct MeasureArgs {
    /// Newline-delimited measurement records.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, requires = "value")]
    pub indicator: Option<String>,
    /// A number, or a level name for level KCIs.
    #[arg(long)]
    pub value: Option<String>,
    /// Effective training compute of the evaluated checkpoint, in FLOP.
    #[arg(long)]
    pub compute: Option<f64>,
    /// Measurement time, seconds since the epoch; defaults to now.
    #[arg(long)]
    pub at: Option<i64>,
    /// The measurement already includes post-training enhancements.
    #[arg(long)]
    pub enhanced: bool,
    #[command(flatten)]
    pub actor: ActorArg,
}

#[derive(Debug, Subcommand)]
pub enum GateCommand {
    /// Check a gate without changing anything.
    Evaluate {
        target: Phase,
        #[arg(long = "approve")]
        approvals: Vec<String>,
    },
    /// Move to the target phase if the gate passes.
    Transition {
        target: Phase,
        #[arg(long = "approve")]
        approvals: Vec<String>,
        #[command(flatten)]
        actor: ActorArg,
    },
}

/// What a command printed and how the process should exit.
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }
}

fn approvals(roles: &[String]) -> Vec<Approval> {
    roles.iter().map(|r| Approval::approve(r)).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))
}

fn open(store: &Path) -> Result<Engine> {
    Engine::open_dir(store, Box::new(SystemClock))
}

fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn render<T: Serialize>(format: Format, value: &T, text: impl FnOnce(&T) -> String) -> String {
    match format {
        Format::Canonical => {
            let mut s = String::from_utf8(to_canonical(value)).expect("canonical output is UTF-8");
            s.push('\n');
            s
        }
        Format::Text => text(value),
    }
}

fn evaluation_text(r: &EvaluationResponse) -> String {
    let mut out = String::new();
    for s in &r.statuses {
        let kri = s.kri_value.map_or("-".to_string(), |v| v.to_string());
        let kci = s
            .kci_value
            .as_ref()
            .map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{:<16} {:<14} kri={kri} kci={kci}",
            s.rule_id,
            label(&s.state)
        );
    }
    for e in &r.escalations {
        let _ = writeln!(
            out,
            "escalation {} opened ({}), deadline {}",
            e.id, e.severity, e.deadline
        );
    }
    for rule in &r.cleared {
        let _ = writeln!(out, "breach of {rule} cleared");
    }
    if let Some(h) = &r.hold {
        let _ = writeln!(out, "development hold active: {}", h.escalations.join(", "));
    }
    let _ = writeln!(out, "audit seq {}", r.audit_seq);
    out
}

fn gate_text(d: &GateDecision) -> String {
    let mut out = String::new();
    for c in &d.checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.evidence
        );
    }
    let verdict = if d.result == GateResult::Pass {
        "passes"
    } else {
        "fails"
    };
    let _ = writeln!(out, "gate {} -> {} {verdict}", d.from, d.to);
    out
}

fn solve_text(r: &SolveResponse) -> String {
    match r {
        SolveResponse::MinKci {
            model,
            tolerance,
            kri,
            result,
        } => match result {
            MinKci::Level { name, rate, .. } => {
                format!("{name}\n{model}: weakest level within {tolerance}/yr at KRI {kri}; residual {rate}/yr\n")
            }
            MinKci::Infeasible => {
                format!("infeasible\n{model}: no level keeps KRI {kri} within {tolerance}/yr\n")
            }
        },
        SolveResponse::MaxKri {
            model,
            tolerance,
            level,
            result,
        } => match result {
            MaxKri::Edge { value } => {
                format!("{value}\n{model}: largest KRI within {tolerance}/yr at level {level}\n")
            }
            MaxKri::NoneAdmissible => {
                format!("none\n{model}: no KRI value is admissible at level {level}\n")
            }
        },
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let f = cli.format;
    let store = cli.store.as_path();
    match cli.command {
        Command::Init { config } => {
            let mut config = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            config.store = store.to_path_buf();
            let engine = Engine::init(config, Box::new(SystemClock))?;
            let head = engine.audit_log().head();
            Ok(Outcome::ok(render(f, &head, |_| {
                format!("initialized store at {}\n", store.display())
            })))
        }
        Command::Import {
            file,
            actor,
            approvals: roles,
        } => {
            let text = read_text(&file)?;
            let mut req: ImportRequest = if file.extension().is_some_and(|e| e == "csv") {
                ImportRequest {
                    taxonomy_csv: Some(text),
                    ..ImportRequest::default()
                }
            } else {
                decode_request(text.as_bytes())?
            };
            req.actor = actor.actor;
            req.approvals.extend(approvals(&roles));
            let r = open(store)?.import(req)?;
            Ok(Outcome::ok(render(f, &r, |r| {
                format!(
                    "imported {} new domains, {} models, {} rules, {} entries (audit seq {})\n",
                    r.domains_added.len(),
                    r.models.len(),
                    r.rules.len(),
                    r.entries.len(),
                    r.audit_seq
                )
            })))
        }
        Command::Measure(args) => {
            let measurements = match (&args.file, &args.indicator, &args.value) {
                (Some(path), ..) => decode_records(&read_text(path)?)?,
                (None, Some(indicator), Some(value)) => {
                    let at = args.at.map_or_else(Timestamp::now, Timestamp);
                    let value = match value.parse::<f64>() {
                        Ok(v) => IndicatorValue::Number(v),
                        Err(_) => IndicatorValue::Level(value.clone()),
                    };
                    vec![Measurement {
                        indicator_id: indicator.clone(),
                        value,
                        timestamp: at,
                        elicitation: args.enhanced.then(|| Elicitation {
                            method_notes: "recorded from the command line".into(),
                            effort_tier: 1,
                            includes_posttraining_enhancements: true,
                        }),
                        effective_compute: args.compute,
                    }]
                }
                _ => {
                    return Err(GatewayError::BadRequest(
                        "give --file or --indicator with --value".into(),
                    ))
                }
            };
            let r = open(store)?.measure(MeasureRequest {
                actor: args.actor.actor,
                measurements,
            })?;
            Ok(Outcome::ok(render(f, &r, evaluation_text)))
        }
        Command::Evaluate { actor } => {
            let r = open(store)?.evaluate(EvaluateRequest { actor: actor.actor })?;
            Ok(Outcome::ok(render(f, &r, evaluation_text)))
        }
        Command::Solve {
            model,
            tolerance,
            kri,
            level,
        } => {
            let r = open(store)?.solve(&SolveRequest {
                model,
                tolerance,
                kri,
                level,
            })?;
            Ok(Outcome::ok(render(f, &r, solve_text)))
        }
        Command::Forecast { kri, threshold } => {
            let r = open(store)?.forecast(&kri, threshold)?;
            Ok(Outcome::ok(render(f, &r, |r| {
                let fit = format!(
                    "fit {} + {} log10(C), rms {}",
                    r.fit.a, r.fit.b, r.fit.residual_rms
                );
                match r.crossing {
                    Crossing::At { compute } => {
                        format!(
                            "{} reaches {} at {compute:e} FLOP\n{fit}\n",
                            r.kri_id, r.threshold
                        )
                    }
                    Crossing::AlreadyReached { compute } => {
                        format!(
                            "{} already reached {} at {compute:e} FLOP\n{fit}\n",
                            r.kri_id, r.threshold
                        )
                    }
                    Crossing::NotReached => {
                        format!("{} does not reach {}\n{fit}\n", r.kri_id, r.threshold)
                    }
                }
            })))
        }
        Command::Gate { command } => match command {
            GateCommand::Evaluate {
                target,
                approvals: roles,
            } => {
                let d = open(store)?.evaluate_gate(target, &approvals(&roles))?;
                Ok(Outcome::ok(render(f, &d, gate_text)))
            }
            GateCommand::Transition {
                target,
                approvals: roles,
                actor,
            } => {
                let r = open(store)?.transition(
                    target,
                    GateRequest {
                        actor: actor.actor,
                        approvals: approvals(&roles),
                    },
                )?;
                Ok(Outcome::ok(render(f, &r, |r| {
                    format!(
                        "{}now in {} (audit seq {})\n",
                        gate_text(&r.decision),
                        r.phase,
                        r.audit_seq
                    )
                })))
            }
        },
        Command::Whatif { file } => {
            let req: WhatIfRequest = decode_request(read_text(&file)?.as_bytes())?;
            let r = open(store)?.whatif(&req)?;
            Ok(Outcome::ok(render(f, &r, |r| {
                let mut out = String::new();
                for e in &r.entries {
                    let alloc = e.allocation.map_or("-".to_string(), |a| a.to_string());
                    let _ = writeln!(
                        out,
                        "{:<12} inherent {} residual {} allocation {alloc}",
                        e.risk_id, e.inherent, e.residual
                    );
                }
                for s in &r.statuses {
                    let _ = writeln!(out, "{:<16} {}", s.rule_id, label(&s.state));
                }
                out
            })))
        }
        Command::Findings { file, actor } => {
            let text = read_text(&file)?;
            let mut req: FindingsRequest = if file.extension().is_some_and(|e| e == "json") {
                decode_request(text.as_bytes())?
            } else {
                FindingsRequest {
                    actor: String::new(),
                    findings: decode_records(&text)?,
                }
            };
            req.actor = actor.actor;
            let r = open(store)?.submit_findings(req)?;
            Ok(Outcome::ok(render(f, &r, |r| {
                format!(
                    "recorded {} (audit seq {})\n",
                    r.ids.join(", "),
                    r.audit_seq
                )
            })))
        }
        Command::Lifecycle { file, actor } => {
            let mut req: LifecycleRequest = decode_request(read_text(&file)?.as_bytes())?;
            req.actor = actor.actor;
            let r = open(store)?.update_lifecycle(req)?;
            Ok(Outcome::ok(render(f, &r, |r| {
                format!(
                    "lifecycle updated, phase {} (audit seq {})\n",
                    r.lifecycle.phase, r.audit_seq
                )
            })))
        }
        Command::Resolve {
            id,
            by,
            decision,
            approvals: roles,
        } => {
            let r = open(store)?.resolve_escalation(
                &id,
                ResolveRequest {
                    by,
                    decision,
                    approvals: approvals(&roles),
                },
            )?;
            Ok(Outcome::ok(render(f, &r, |r| match &r.hold {
                None => format!("{} resolved; no hold active\n", r.escalation.id),
                Some(h) => format!(
                    "{} resolved; hold remains for {}\n",
                    r.escalation.id,
                    h.escalations.join(", ")
                ),
            })))
        }
        Command::Report { kind, from, to } => {
            let engine = open(store)?;
            let period = (from.is_some() || to.is_some()).then(|| Period {
                from: Timestamp(from.unwrap_or(0)),
                to: to.map_or_else(|| engine.now(), Timestamp),
            });
            let d = engine.disclosure(kind, period)?;
            Ok(Outcome::ok(render(f, &d, pretty)))
        }
        Command::Export => {
            let mut s = String::from_utf8(open(store)?.register_bytes())
                .expect("canonical output is UTF-8");
            s.push('\n');
            Ok(Outcome::ok(s))
        }
        Command::Verify => {
            let r = Store::verify_files(store)?;
            let code = if r.ok { 0 } else { 1 };
            let stdout = render(f, &r, |r| match &r.broken {
                None => format!(
                    "audit chain ok: {} events, head {}\n",
                    r.head.count, r.head.hash
                ),
                Some(b) => format!("audit chain broken at seq {}: {}\n", b.seq, b.reason),
            });
            Ok(Outcome { stdout, code })
        }
        Command::Serve { listen } => {
            let engine = open(store)?;
            let listen = listen.unwrap_or_else(|| engine.config().listen.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| GatewayError::io(store, e))?;
            rt.block_on(crate::api::serve(engine, &listen))
                .map_err(|e| GatewayError::BadRequest(format!("serve on {listen}: {e}")))?;
            Ok(Outcome::ok(String::new()))
        }
    }
}
