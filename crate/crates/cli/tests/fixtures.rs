//! The files under `fixtures/` are the core CYBER-1 fixture in request
//! form. Set `RISKCTL_BLESS=1` to rewrite them after a fixture change.

use std::path::PathBuf;

use riskctl_core::canonical::to_canonical;
use riskctl_core::fixtures;
use riskctl_core::gateway::{Config, ImportRequest};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn expected() -> Vec<(&'static str, Vec<u8>)> {
    let reg = fixtures::cyber1_register();
    let import = ImportRequest {
        domains: reg.domains,
        models: reg.models,
        catalog: Some(reg.catalog),
        budget: reg.budget,
        entries: vec![fixtures::cyber1_entry_draft()],
        ..ImportRequest::default()
    };
    let config = Config {
        governance: fixtures::governance(),
        ..Config::default()
    };
    vec![
        ("cyber1.json", to_canonical(&import)),
        ("config.json", config.to_bytes()),
    ]
}

#[test]
fn fixture_files_match_core_fixtures() {
    let bless = std::env::var_os("RISKCTL_BLESS").is_some();
    for (name, bytes) in expected() {
        let path = dir().join(name);
        if bless {
            std::fs::write(&path, &bytes).unwrap();
        }
        let on_disk = std::fs::read(&path).unwrap_or_default();
        assert!(
            on_disk == bytes,
            "{name} is stale; rerun with RISKCTL_BLESS=1"
        );
    }
}
