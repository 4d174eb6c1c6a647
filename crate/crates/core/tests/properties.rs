mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskctl_core::fixtures::{self, T0};
use riskctl_core::gateway::{ExcludeRequest, GatewayError};
use riskctl_core::identification::{DomainStatus, FindingSeverity, FindingStage};
use riskctl_core::indicators::{
    due_evaluations, effective_kri_value, fit_scaling, forecast_crossing, Elicitation,
    EvaluationSchedule, Measurement, RecencyWindow,
};
use riskctl_core::register::AuditKind;
use riskctl_core::riskmodel::QuantifiedRisk;
use riskctl_core::riskmodel::{
    chain_residual_rate, eval_event_tree, eval_fault_tree, BasicEvent, BranchOutcome, BranchPoint,
    EventTree, EventTreeLeaf, FaultTree, Gate, InitiatingEvent, ProbabilitySource, ScenarioChain,
    ScenarioStep, Severity,
};
use riskctl_core::tolerance::{
    allocate_budget, check_compliance, normalize_rate, RateUnit, RiskTolerance, HOURS_PER_YEAR,
};

use common::{apply, cyber1_engine, Op, Walk};

fn random_tree(seed: u64, n: usize) -> FaultTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates: Vec<(String, Gate)> = (0..rng.random_range(1..6))
        .map(|g| {
            let mut pool: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
            pool.extend((0..g).map(|j| format!("g{j}")));
            let k = rng.random_range(1..=pool.len().min(4));
            let children: Vec<String> = (0..k)
                .map(|_| pool.swap_remove(rng.random_range(0..pool.len())))
                .collect();
            let gate = match rng.random_range(0..3) {
                0 => Gate::and(children),
                1 => Gate::or(children),
                _ => Gate::k_of_n(rng.random_range(1..=k), children),
            };
            (format!("g{g}"), gate)
        })
        .collect();
    FaultTree {
        top: gates.last().unwrap().0.clone(),
        basic_events: (0..n)
            .map(|i| BasicEvent::with_probability(format!("e{i}"), rng.random()))
            .collect(),
        gates: gates.into_iter().collect(),
    }
}

fn fixed_chain(freq: f64, probs: &[f64]) -> ScenarioChain {
    ScenarioChain {
        id: "X".into(),
        description: String::new(),
        initiating_frequency: freq,
        steps: probs
            .iter()
            .enumerate()
            .map(|(i, p)| ScenarioStep {
                id: format!("s{i}"),
                description: String::new(),
                source: ProbabilitySource::Fixed { probability: *p },
            })
            .collect(),
        severity: Severity::usd(1e9),
    }
}

fn kri_measurement(value: f64, day: i64, enhanced: bool) -> Measurement {
    let mut m = Measurement::number(fixtures::CYBENCH, value, T0.plus_days(day));
    m.elicitation = Some(Elicitation {
        method_notes: String::new(),
        effort_tier: 1,
        includes_posttraining_enhancements: enhanced,
    });
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fault_tree_is_monotone_in_event_probabilities(
        seed in any::<u64>(),
        n in 1usize..9,
        which in 0usize..9,
        raise in 0.0f64..1.0,
    ) {
        let tree = random_tree(seed, n);
        let event = &tree.basic_events[which % n];
        let base = eval_fault_tree(&tree, None).unwrap();
        let p = match event.likelihood {
            riskctl_core::riskmodel::Likelihood::Probability(p) => p,
            _ => unreachable!(),
        };
        let higher = BTreeMap::from([(event.id.clone(), p + (1.0 - p) * raise)]);
        let raised = eval_fault_tree(&tree, Some(&higher)).unwrap();
        prop_assert!(raised >= base - 1e-12, "{base} -> {raised}");
        prop_assert!((0.0..=1.0).contains(&raised));
    }

    #[test]
    fn event_tree_leaves_conserve_frequency(
        freq in 1e-6f64..10.0,
        weights in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 2..4), 0..4),
        harmful in any::<u64>(),
    ) {
        let branch_points: Vec<BranchPoint> = weights
            .iter()
            .map(|w| {
                let sum: f64 = w.iter().sum();
                BranchPoint {
                    description: String::new(),
                    outcomes: w
                        .iter()
                        .enumerate()
                        .map(|(i, x)| BranchOutcome { label: format!("o{i}"), probability: x / sum })
                        .collect(),
                }
            })
            .collect();
        let mut paths: Vec<Vec<usize>> = vec![vec![]];
        for bp in &branch_points {
            paths = paths
                .into_iter()
                .flat_map(|p| (0..bp.outcomes.len()).map(move |o| [p.clone(), vec![o]].concat()))
                .collect();
        }
        let leaves = paths
            .into_iter()
            .enumerate()
            .map(|(i, path)| EventTreeLeaf {
                path,
                severity: (harmful >> (i % 64) & 1 == 1).then(|| Severity::usd(1e6 * (1 + i % 3) as f64)),
            })
            .collect();
        let tree = EventTree {
            id: "T".into(),
            initiating_event: InitiatingEvent { description: String::new(), frequency: freq },
            branch_points,
            leaves,
        };
        let q = eval_event_tree(&tree).unwrap();
        let total: f64 = q.by_severity.values().sum::<f64>() + q.benign_rate;
        prop_assert!((total - freq).abs() <= 1e-9 * freq, "{total} vs {freq}");
        let leaf_total: f64 = q.leaves.iter().map(|l| l.rate).sum();
        prop_assert!((leaf_total - freq).abs() <= 1e-9 * freq);
    }

    #[test]
    fn chain_residual_is_monotone_in_each_step(
        freq in 1e-6f64..10.0,
        probs in prop::collection::vec(0.0f64..=1.0, 1..6),
        which in 0usize..6,
        raise in 0.0f64..1.0,
    ) {
        let base = chain_residual_rate(&fixed_chain(freq, &probs), &()).unwrap().rate;
        let mut higher = probs.clone();
        let i = which % probs.len();
        higher[i] += (1.0 - higher[i]) * raise;
        let raised = chain_residual_rate(&fixed_chain(freq, &higher), &()).unwrap().rate;
        prop_assert!(raised >= base, "{base} -> {raised}");
        prop_assert!(raised <= freq * (1.0 + 1e-12));
    }

    #[test]
    fn normalize_rate_is_linear(a in 0.0f64..1e3, b in 0.0f64..1e3, hours in 1.0f64..1e4) {
        for unit in [RateUnit::FlightHour, RateUnit::PlaneYear, RateUnit::Year, RateUnit::Month] {
            let sum = normalize_rate(a + b, unit, hours).unwrap();
            let parts = normalize_rate(a, unit, hours).unwrap() + normalize_rate(b, unit, hours).unwrap();
            prop_assert!((sum - parts).abs() <= 1e-12 * sum.max(1e-300));
        }
        let per_hour = normalize_rate(a, RateUnit::FlightHour, HOURS_PER_YEAR).unwrap();
        prop_assert!((per_hour - a * HOURS_PER_YEAR).abs() <= 1e-15 * per_hour.max(1e-300));
    }

    #[test]
    fn failed_reallocation_keeps_the_ledger(
        total in 1e-4f64..1e-1,
        shares in prop::collection::vec(0.0f64..0.5, 1..5),
        bumped in prop::collection::vec(0.0f64..2.0, 1..5),
    ) {
        let tol = RiskTolerance::quantitative(total, Severity::usd(1e8), "t").unwrap();
        let to_map = |xs: &[f64], scale: f64| -> BTreeMap<String, f64> {
            xs.iter().enumerate().map(|(i, x)| (format!("d{i}"), x * scale)).collect()
        };
        let Ok(ledger) = allocate_budget(tol, to_map(&shares, total)) else {
            return Ok(());
        };
        let mut copy = ledger.clone();
        if copy.reallocate(to_map(&bumped, total)).is_err() {
            prop_assert_eq!(copy, ledger);
        } else {
            prop_assert!(copy.allocated() <= total);
        }
    }

    #[test]
    fn lowering_a_residual_keeps_compliance(
        shares in prop::collection::vec(1e-4f64..1e-2, 1..5),
        fractions in prop::collection::vec(0.0f64..1.3, 5),
        which in 0usize..5,
        cut in 0.0f64..1.0,
    ) {
        let total: f64 = shares.iter().sum::<f64>() * 1.01;
        let tol = RiskTolerance::quantitative(total, Severity::usd(1e8), "t").unwrap();
        let map: BTreeMap<String, f64> =
            shares.iter().enumerate().map(|(i, s)| (format!("d{i}"), *s)).collect();
        let ledger = allocate_budget(tol, map.clone()).unwrap();
        let mut residuals: BTreeMap<String, QuantifiedRisk> = map
            .iter()
            .zip(&fractions)
            .map(|((d, s), f)| (d.clone(), QuantifiedRisk::point(s * f, Severity::usd(1e8))))
            .collect();
        let before = check_compliance(&ledger, &residuals).unwrap();
        let key = format!("d{}", which % shares.len());
        let r = residuals.get_mut(&key).unwrap();
        r.rate *= cut;
        let after = check_compliance(&ledger, &residuals).unwrap();
        prop_assert!(!before.pass || after.pass);
        prop_assert!(after.aggregate_residual <= before.aggregate_residual);
    }

    #[test]
    fn effective_kri_never_drops_when_measurements_are_added(
        history in prop::collection::vec((0.0f64..100.0, 0i64..60, any::<bool>()), 1..10),
        extra in (0.0f64..100.0, 0i64..60, any::<bool>()),
        margin in 0.0f64..20.0,
    ) {
        let kri = fixtures::cyber1_catalog().kris[0].clone();
        let window = RecencyWindow { now: T0.plus_days(60), weights_changed_at: None, fallback_days: 90 };
        let mut ms: Vec<Measurement> =
            history.iter().map(|(v, d, e)| kri_measurement(*v, *d, *e)).collect();
        let before = effective_kri_value(&kri, &ms, margin, &window).unwrap();
        ms.push(kri_measurement(extra.0, extra.1, extra.2));
        let after = effective_kri_value(&kri, &ms, margin, &window).unwrap();
        prop_assert!(after >= before);
        prop_assert!(after <= kri.scale.hi);
    }

    #[test]
    fn forecast_ignores_duplicate_points(
        points in prop::collection::btree_map(18u32..27, -50.0f64..100.0, 2..6),
        dupes in prop::collection::vec(0usize..6, 0..6),
        threshold in 0.0f64..150.0,
    ) {
        let pts: Vec<(f64, f64)> = points.iter().map(|(e, v)| (10f64.powi(*e as i32), *v)).collect();
        let mut with_dupes = pts.clone();
        for d in dupes {
            with_dupes.push(pts[d % pts.len()]);
        }
        let a = fit_scaling(&pts).unwrap();
        let b = fit_scaling(&with_dupes).unwrap();
        prop_assert_eq!((a.a, a.b), (b.a, b.b));
        prop_assert_eq!(
            forecast_crossing(&pts, threshold).unwrap().crossing,
            forecast_crossing(&with_dupes, threshold).unwrap().crossing
        );
    }

    #[test]
    fn due_evaluations_grow_with_time_and_compute(
        last in prop::collection::vec((1e20f64..1e26, 0i64..400), 0..5),
        compute in prop::collection::vec(1e20f64..1e27, 5),
        day in 0i64..800,
        later in 0i64..400,
        growth in 1.0f64..10.0,
    ) {
        let mut schedule = EvaluationSchedule::default();
        for (i, (c, d)) in last.iter().enumerate() {
            schedule.record_evaluation(&format!("k{i}"), *c, T0.plus_days(*d));
        }
        let now = T0.plus_days(day);
        let current: BTreeMap<String, f64> =
            compute.iter().enumerate().map(|(i, c)| (format!("k{i}"), *c)).collect();
        let grown: BTreeMap<String, f64> = current.iter().map(|(k, c)| (k.clone(), c * growth)).collect();
        let due = due_evaluations(&schedule, now, &current).unwrap();
        let due_later = due_evaluations(&schedule, now.plus_days(later), &current).unwrap();
        let due_grown = due_evaluations(&schedule, now, &grown).unwrap();
        prop_assert!(due.iter().all(|k| due_later.contains(k)));
        prop_assert!(due.iter().all(|k| due_grown.contains(k)));
    }

    #[test]
    fn exclusions_need_a_justification_and_leave_an_audit_event(
        justification in "[ a-z\\n]{0,12}",
        approver in prop::sample::select(common::ROLES.to_vec()),
    ) {
        let mut e = cyber1_engine(T0.plus_days(1));
        let domain = e.snapshot().domains[0].id.clone();
        let before = e.audit_log().len();
        let r = e.exclude(&domain, ExcludeRequest {
            justification: justification.clone(),
            approver: approver.to_string(),
            approvals: vec![],
        });
        let allowed = !justification.trim().is_empty() && matches!(approver, "owner-cyber" | "cro");
        prop_assert_eq!(r.is_ok(), allowed, "{:?}", r);
        let s = e.snapshot();
        let d = s.domains.iter().find(|d| d.id == domain).unwrap();
        if allowed {
            prop_assert_eq!(d.status, DomainStatus::Excluded);
            prop_assert_eq!(d.exclusion_justification.as_deref(), Some(justification.as_str()));
            let last = e.audit_log().events().last().unwrap();
            prop_assert_eq!(last.kind, AuditKind::Exclusion);
            prop_assert_eq!(e.audit_log().len(), before + 1);
        } else {
            prop_assert_eq!(d.status, DomainStatus::InScope);
            prop_assert_eq!(e.audit_log().len(), before);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_walks_keep_register_invariants(seed in any::<u64>(), len in 1usize..60) {
        let start = T0.plus_days(2);
        let mut e = cyber1_engine(start);
        let mut walk = Walk::new(ChaCha8Rng::seed_from_u64(seed), start);
        for _ in 0..len {
            let op = walk.next_op(&e);
            let result = apply(&mut e, &op, walk.now);
            if let Op::Transition { approvals, .. } | Op::Reallocate { approvals, .. } = &op {
                if approvals.iter().any(|r| r == "internal-audit") {
                    prop_assert!(
                        matches!(result, Err(GatewayError::ApprovalBlocked(_)) | Err(GatewayError::Lifecycle(_))),
                        "{:?} with internal audit approving returned {:?}", op, result
                    );
                }
            }
            let s = e.snapshot();
            for f in &s.findings {
                let mut stage = FindingStage::Reported;
                for change in &f.history {
                    prop_assert_eq!(change.from, stage);
                    prop_assert!(stage.can_advance_to(change.to), "{} {:?}", f.id, f.history);
                    stage = change.to;
                }
                prop_assert_eq!(stage, f.stage);
                if f.stage == FindingStage::Dismissed {
                    prop_assert!(f.dismissal_justification.as_ref().is_some_and(|j| !j.trim().is_empty()));
                }
                if f.stage == FindingStage::Confirmed && f.severity_estimate == FindingSeverity::High {
                    prop_assert!(
                        !f.linked_models.is_empty() || s.tasks.iter().any(|t| t.finding_id == f.id),
                        "confirmed high finding {} has neither model nor task", f.id
                    );
                }
                if f.reporter_id.is_none() {
                    prop_assert!(f.reporter != riskctl_core::identification::ReporterKind::Internal);
                }
            }
            for entry in &s.entries {
                prop_assert!(entry.residual_risk.rate <= entry.inherent_risk.rate);
            }
            if let Some(ledger) = &s.budget {
                prop_assert!(ledger.validate().is_ok());
            }
        }
        let history = &e.snapshot().lifecycle.history;
        let gate_events = e.audit_log().events().iter().filter(|ev| ev.kind == AuditKind::Gate).count();
        prop_assert_eq!(history.len(), gate_events);
        prop_assert!(e.audit_log().verify().is_ok());
    }
}
