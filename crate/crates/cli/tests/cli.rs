use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riskctl_core::gateway::Engine;
use riskctl_core::time::SystemClock;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn riskctl(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskctl"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("riskctl runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_ok(store: &Path, args: &[&str]) -> String {
    let o = riskctl(store, args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn cyber1_store() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("config.json");
    run_ok(dir.path(), &["init", "--config", config.to_str().unwrap()]);
    run_ok(
        dir.path(),
        &["import", fixture("cyber1.json").to_str().unwrap()],
    );
    dir
}

#[test]
fn solve_cyber1_prints_l3() {
    let dir = cyber1_store();
    let out = run_ok(
        dir.path(),
        &[
            "solve",
            "--model",
            "CYBER-1",
            "--tolerance",
            "0.006",
            "--kri",
            "60",
        ],
    );
    assert_eq!(out.lines().next(), Some("L3"), "{out}");

    let out = run_ok(
        dir.path(),
        &[
            "--format",
            "canonical",
            "solve",
            "--model",
            "CYBER-1",
            "--tolerance",
            "0.006",
            "--kri",
            "60",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["name"], "L3");
    assert_eq!(v["rate"], 0.005);
    assert_eq!(v["solve"], "min_kci");
}

#[test]
fn solve_defaults_to_the_budget_allocation() {
    let dir = cyber1_store();
    let out = run_ok(dir.path(), &["solve", "--model", "CYBER-1", "--kri", "60"]);
    assert!(out.contains("within 0.006/yr"), "{out}");
    let out = run_ok(
        dir.path(),
        &["solve", "--model", "CYBER-1", "--level", "L2"],
    );
    assert_eq!(out.lines().next(), Some("40"), "{out}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--model", "CYBER-1", "--kri", "60", "--bogus"][..],
        &[][..],
        &["nonsense"][..],
        &["solve", "--model", "CYBER-1"][..],
        &[
            "solve", "--model", "CYBER-1", "--kri", "60", "--level", "L2",
        ][..],
        &["measure", "--indicator", "cybench"][..],
        &["gate", "evaluate", "orbit"][..],
    ] {
        assert_eq!(riskctl(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn domain_errors_exit_1() {
    let dir = cyber1_store();
    let o = riskctl(dir.path(), &["solve", "--model", "NOPE", "--kri", "60"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NOPE"));

    let o = riskctl(
        dir.path(),
        &["measure", "--indicator", "cybench", "--value", "120"],
    );
    assert_eq!(o.status.code(), Some(1));

    let empty = tempfile::tempdir().unwrap();
    let o = riskctl(empty.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("init"));

    let config = fixture("config.json");
    let o = riskctl(dir.path(), &["init", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn breach_then_tamper_detected() {
    let dir = cyber1_store();
    run_ok(
        dir.path(),
        &["measure", "--indicator", "security_level", "--value", "L2"],
    );
    let out = run_ok(
        dir.path(),
        &[
            "measure",
            "--indicator",
            "cybench",
            "--value",
            "60",
            "--compute",
            "1e25",
        ],
    );
    assert!(out.contains("breached"), "{out}");
    assert!(out.contains("escalation ESC-1 opened"), "{out}");
    assert!(out.contains("development hold active"), "{out}");

    let o = riskctl(
        dir.path(),
        &[
            "gate",
            "transition",
            "training",
            "--approve",
            "owner-cyber",
            "--approve",
            "cro",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hold"));

    let out = run_ok(dir.path(), &["verify"]);
    assert!(out.starts_with("audit chain ok: 3 events"), "{out}");

    // Corrupt the record with seq 1.
    let engine = Engine::open_dir(dir.path(), Box::new(SystemClock)).unwrap();
    let log = engine.audit_log();
    let offset = log.encode().len() - log.encode_from(1).len();
    let path = dir.path().join("audit.log");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[offset + 20] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();

    let o = riskctl(dir.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("broken at seq 1"), "{}", stdout(&o));

    let o = riskctl(dir.path(), &["--format", "canonical", "verify"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ok"], false);
    assert_eq!(v["broken"]["seq"], 1);
}

#[test]
fn full_workflow() {
    let dir = cyber1_store();
    let s = dir.path();
    run_ok(
        s,
        &["measure", "--indicator", "security_level", "--value", "L2"],
    );
    run_ok(s, &["measure", "--indicator", "cybench", "--value", "60"]);
    let out = run_ok(
        s,
        &[
            "resolve",
            "ESC-1",
            "--by",
            "cro",
            "--decision",
            "raise weight security to L3",
            "--approve",
            "cro",
            "--approve",
            "vp-eng",
        ],
    );
    assert!(out.contains("no hold active"), "{out}");
    let records = dir.path().join("m.jsonl");
    std::fs::write(
        &records,
        format!(
            "{{\"indicator_id\":\"security_level\",\"timestamp\":{},\"value\":\"L3\"}}\n\n",
            riskctl_core::time::Timestamp::now().0
        ),
    )
    .unwrap();
    let out = run_ok(s, &["measure", "--file", records.to_str().unwrap()]);
    assert!(out.contains("breach of R-CYBER-1 cleared"), "{out}");
    let out = run_ok(s, &["evaluate"]);
    assert!(out.contains("satisfied"), "{out}");

    let whatif = dir.path().join("whatif.json");
    std::fs::write(
        &whatif,
        r#"{"kci":{"security_level":"L4"},"kri":{"cybench":60}}"#,
    )
    .unwrap();
    let before = std::fs::read(dir.path().join("audit.log")).unwrap();
    let out = run_ok(s, &["whatif", whatif.to_str().unwrap()]);
    assert!(out.contains("residual 0.001"), "{out}");
    assert_eq!(std::fs::read(dir.path().join("audit.log")).unwrap(), before);

    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"update":{"mitigation":{"kci_id":"security_level","level":"L3"},"op":"plan_mitigation"}}"#,
    )
    .unwrap();
    let out = run_ok(s, &["lifecycle", plan.to_str().unwrap()]);
    assert!(
        out.starts_with("lifecycle updated, phase planning"),
        "{out}"
    );

    let out = run_ok(
        s,
        &[
            "gate",
            "evaluate",
            "training",
            "--approve",
            "owner-cyber",
            "--approve",
            "cro",
        ],
    );
    assert!(out.contains("passes"), "{out}");
    let out = run_ok(
        s,
        &[
            "gate",
            "transition",
            "training",
            "--approve",
            "owner-cyber",
            "--approve",
            "cro",
        ],
    );
    assert!(out.contains("now in training"), "{out}");

    let findings = dir.path().join("findings.jsonl");
    std::fs::write(
        &findings,
        r#"{"description":"jailbreak bypasses refusal","reporter":"internal","severity":"high"}"#,
    )
    .unwrap();
    let out = run_ok(s, &["findings", findings.to_str().unwrap()]);
    assert!(out.starts_with("recorded F-1"), "{out}");

    let out = run_ok(s, &["--format", "canonical", "report", "risk"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["kind"], "risk_disclosure");
    let out = run_ok(s, &["report", "incident"]);
    assert!(out.contains("R-CYBER-1"), "{out}");

    let exported = run_ok(s, &["export"]);
    assert!(exported.starts_with('{'));
    let out = run_ok(s, &["verify"]);
    assert!(out.starts_with("audit chain ok"), "{out}");
}

#[test]
fn taxonomy_csv_import() {
    let dir = cyber1_store();
    let csv = dir.path().join("taxonomy.csv");
    std::fs::write(&csv, "name,source\nCBRN uplift,literature review\n").unwrap();
    let out = run_ok(dir.path(), &["import", csv.to_str().unwrap()]);
    assert!(out.starts_with("imported 1 new domains"), "{out}");

    std::fs::write(&csv, "name,source\nCyber offense,internal taxonomy\n").unwrap();
    let o = riskctl(dir.path(), &["import", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate"));
}

#[test]
fn forecast_reports_crossing() {
    let dir = cyber1_store();
    let s = dir.path();
    let now = riskctl_core::time::Timestamp::now().0;
    for (value, compute) in [("30", "1e22"), ("50", "1e24")] {
        run_ok(
            s,
            &[
                "measure",
                "--indicator",
                "cybench",
                "--value",
                value,
                "--compute",
                compute,
                "--at",
                &now.to_string(),
            ],
        );
    }
    let out = run_ok(s, &["forecast", "--kri", "cybench"]);
    assert!(out.starts_with("cybench reaches 60 at 1e25 FLOP"), "{out}");
}
