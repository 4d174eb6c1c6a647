//! Deterministic workloads for the benchmarks.

use riskctl_core::fixtures::{self, T0};
use riskctl_core::indicators::{IndicatorCatalog, Measurement, RecencyWindow};
use riskctl_core::register::{AuditKind, AuditLog};
use riskctl_core::riskmodel::{BasicEvent, FaultTree, Gate};
use serde_json::json;

/// A layered fault tree over `n` basic events. Each layer-one gate is a
/// 2-of-3 vote over overlapping events, so events are shared between gates.
pub fn voting_tree(n: usize) -> FaultTree {
    assert!(n >= 3, "need at least three events");
    let gates: Vec<(String, Gate)> = (0..n)
        .map(|i| {
            let children = (0..3).map(|d| format!("e{}", (i + d) % n));
            (format!("v{i}"), Gate::k_of_n(2, children))
        })
        .chain(std::iter::once((
            "top".to_string(),
            Gate::or((0..n).map(|i| format!("v{i}"))),
        )))
        .collect();
    FaultTree {
        top: "top".into(),
        gates: gates.into_iter().collect(),
        basic_events: (0..n)
            .map(|i| {
                BasicEvent::with_probability(format!("e{i}"), 0.01 + 0.3 * i as f64 / n as f64)
            })
            .collect(),
    }
}

/// The CYBER-1 catalog with `n` daily capability and control readings.
pub fn rule_history(n: usize) -> (IndicatorCatalog, Vec<Measurement>, RecencyWindow) {
    let levels = ["L1", "L2", "L3", "L4"];
    let ms = (0..n)
        .map(|i| {
            let at = T0.plus_days((i / 2) as i64);
            if i % 2 == 0 {
                Measurement::number(fixtures::CYBENCH, (i % 97) as f64, at)
            } else {
                Measurement::level(fixtures::SECURITY_LEVEL, levels[i % 4], at)
            }
        })
        .collect();
    let window = RecencyWindow {
        now: T0.plus_days((n / 2) as i64),
        weights_changed_at: None,
        fallback_days: 90,
    };
    (fixtures::cyber1_catalog(), ms, window)
}

/// An audit log of `n` measurement events.
pub fn audit_log(n: usize) -> AuditLog {
    let mut log = AuditLog::new();
    for i in 0..n {
        log.append(
            "evals",
            AuditKind::Measurement,
            &json!({"indicator_id": fixtures::CYBENCH, "value": i % 100}),
            T0.plus_secs(i as i64),
        );
    }
    log
}
