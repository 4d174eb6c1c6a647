//! Directory-backed store.
//!
//! ```text
//! <root>/register.json   {"audit_head":{..},"register":{..},"version":1}
//! <root>/audit.log       length-prefixed audit records
//! <root>/config.json     engine configuration
//! ```
//!
//! A commit first appends the new audit records, then replaces
//! `register.json` through a temp file and a rename. The register names the
//! audit head it was committed with; log records past that head belong to
//! a commit that never finished and are ignored on load and overwritten
//! by the next commit.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{encode_value, from_canonical};
use crate::register::{
    decode_log, export_register, import_register, verify_chain, AuditHead, AuditLog, ChainBroken,
    RegisterSnapshot, FORMAT_VERSION,
};

use super::config::{Config, CONFIG_FILE};
use super::requests::VerifyReport;
use super::{GatewayError, Result};

pub const REGISTER_FILE: &str = "register.json";
pub const AUDIT_FILE: &str = "audit.log";
const TEMP_SUFFIX: &str = ".tmp";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    audit_head: AuditHead,
    register: Value,
    version: u32,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    committed_log_bytes: u64,
    fail_after: Option<u32>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| GatewayError::io(path, e))
}

fn sync_dir(dir: &Path) {
    // Not every platform can open a directory for syncing.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

impl Store {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn register_path(&self) -> PathBuf {
        self.root.join(REGISTER_FILE)
    }

    pub fn audit_path(&self) -> PathBuf {
        self.root.join(AUDIT_FILE)
    }

    /// Creates an empty store with `config` written next to it.
    pub fn init(root: &Path, config: &Config) -> Result<(Store, RegisterSnapshot, AuditLog)> {
        if root.join(REGISTER_FILE).exists() {
            return Err(GatewayError::AlreadyInitialized(root.display().to_string()));
        }
        fs::create_dir_all(root).map_err(|e| GatewayError::io(root, e))?;
        let mut store = Store {
            root: root.to_path_buf(),
            committed_log_bytes: 0,
            fail_after: None,
        };
        store.write_atomic(&root.join(CONFIG_FILE), &config.to_bytes())?;
        let audit = store.audit_path();
        File::create(&audit).map_err(|e| GatewayError::io(&audit, e))?;
        let snapshot = RegisterSnapshot {
            schedule: config.schedule(),
            ..RegisterSnapshot::default()
        };
        let log = AuditLog::new();
        store.commit(&snapshot, &log, 0)?;
        Ok((store, snapshot, log))
    }

    /// Loads the last committed register and its audit log.
    pub fn open(root: &Path) -> Result<(Store, RegisterSnapshot, AuditLog)> {
        let register_path = root.join(REGISTER_FILE);
        if !register_path.exists() {
            return Err(GatewayError::NotInitialized(root.display().to_string()));
        }
        let envelope: Envelope = from_canonical(&read_file(&register_path)?)
            .map_err(|v| GatewayError::Corrupt(format!("{REGISTER_FILE}: {v}")))?;
        if envelope.version != FORMAT_VERSION {
            return Err(GatewayError::VersionMismatch {
                found: envelope.version,
                expected: FORMAT_VERSION,
            });
        }
        let snapshot = import_register(encode_value(&envelope.register).as_bytes())
            .map_err(|v| GatewayError::Corrupt(format!("{REGISTER_FILE}: {v}")))?;

        let audit_path = root.join(AUDIT_FILE);
        let bytes = if audit_path.exists() {
            read_file(&audit_path)?
        } else {
            Vec::new()
        };
        let head = envelope.audit_head;
        let (mut events, err) = decode_log(&bytes);
        let count = usize::try_from(head.count)
            .map_err(|_| GatewayError::Corrupt("audit head count".into()))?;
        if events.len() < count {
            return Err(match err {
                Some((broken, _)) => broken.into(),
                None => GatewayError::Corrupt(format!(
                    "{AUDIT_FILE} holds {} events but the register was committed with {count}",
                    events.len()
                )),
            });
        }
        events.truncate(count);
        let log = AuditLog::from_events(events)?;
        if log.head() != head {
            return Err(GatewayError::Corrupt(format!(
                "{AUDIT_FILE} does not end in the committed head {}",
                head.hash
            )));
        }
        let committed_log_bytes = log.encode().len() as u64;
        Ok((
            Store {
                root: root.to_path_buf(),
                committed_log_bytes,
                fail_after: None,
            },
            snapshot,
            log,
        ))
    }

    /// Checks the audit log on disk: every record up to the committed head
    /// must decode and chain. Reports the first bad seq instead of failing.
    pub fn verify_files(root: &Path) -> Result<VerifyReport> {
        let register_path = root.join(REGISTER_FILE);
        if !register_path.exists() {
            return Err(GatewayError::NotInitialized(root.display().to_string()));
        }
        let envelope: Envelope = from_canonical(&read_file(&register_path)?)
            .map_err(|v| GatewayError::Corrupt(format!("{REGISTER_FILE}: {v}")))?;
        let audit_path = root.join(AUDIT_FILE);
        let bytes = if audit_path.exists() {
            read_file(&audit_path)?
        } else {
            Vec::new()
        };
        let head = envelope.audit_head;
        let (events, err) = decode_log(&bytes);
        let count = usize::try_from(head.count).unwrap_or(usize::MAX);
        let mut broken = if events.len() < count {
            err.map(|(b, _)| b).or(Some(ChainBroken {
                seq: events.len() as u64,
                reason: format!(
                    "log ends after {} of {count} committed events",
                    events.len()
                ),
            }))
        } else {
            None
        };
        let committed = &events[..events.len().min(count)];
        if broken.is_none() {
            broken = verify_chain(committed).err();
        }
        if broken.is_none() {
            let log = AuditLog::from_events(committed.to_vec())?;
            if log.head() != head {
                broken = Some(ChainBroken {
                    seq: count.saturating_sub(1) as u64,
                    reason: "log does not end in the committed head".into(),
                });
            }
        }
        Ok(VerifyReport {
            ok: broken.is_none(),
            head,
            broken,
        })
    }

    pub fn read_config(root: &Path) -> Result<Config> {
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Err(GatewayError::NotInitialized(root.display().to_string()));
        }
        let mut config = Config::load(&path)?;
        config.store = root.to_path_buf();
        Ok(config)
    }

    /// Makes the next commit fail at its `steps`-th write step, leaving
    /// the files as a crash at that point would. Partial writes write half
    /// of their bytes first. A commit with fewer steps clears the fault.
    pub fn inject_fault_after(&mut self, steps: u32) {
        self.fail_after = Some(steps);
    }

    fn step(&mut self, name: &'static str) -> Result<()> {
        match self.fail_after {
            Some(0) => {
                self.fail_after = None;
                Err(GatewayError::InjectedFault(name))
            }
            Some(n) => {
                self.fail_after = Some(n - 1);
                Ok(())
            }
            None => Ok(()),
        }
    }

    fn write_all(
        &mut self,
        file: &mut File,
        bytes: &[u8],
        path: &Path,
        name: &'static str,
    ) -> Result<()> {
        if let Err(e) = self.step(name) {
            let _ = file.write_all(&bytes[..bytes.len() / 2]);
            let _ = file.sync_data();
            return Err(e);
        }
        file.write_all(bytes).map_err(|e| GatewayError::io(path, e))
    }

    fn write_atomic(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(TEMP_SUFFIX);
        let tmp = path.with_file_name(tmp_name);
        let mut f = File::create(&tmp).map_err(|e| GatewayError::io(&tmp, e))?;
        self.write_all(&mut f, bytes, &tmp, "temp file write")?;
        f.sync_all().map_err(|e| GatewayError::io(&tmp, e))?;
        drop(f);
        self.step("rename")?;
        fs::rename(&tmp, path).map_err(|e| GatewayError::io(path, e))?;
        sync_dir(path.parent().unwrap_or(Path::new(".")));
        Ok(())
    }

    /// Appends `log` events from position `from` and replaces the register.
    pub fn commit(
        &mut self,
        snapshot: &RegisterSnapshot,
        log: &AuditLog,
        from: usize,
    ) -> Result<()> {
        let audit = self.audit_path();
        let tail = log.encode_from(from);
        let mut f = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(false)
            .open(&audit)
            .map_err(|e| GatewayError::io(&audit, e))?;
        self.step("log truncate")?;
        f.set_len(self.committed_log_bytes)
            .map_err(|e| GatewayError::io(&audit, e))?;
        f.seek(SeekFrom::End(0))
            .map_err(|e| GatewayError::io(&audit, e))?;
        self.write_all(&mut f, &tail, &audit, "log append")?;
        f.sync_data().map_err(|e| GatewayError::io(&audit, e))?;
        drop(f);

        let mut envelope = serde_json::Map::new();
        envelope.insert(
            "audit_head".into(),
            serde_json::to_value(log.head()).expect("audit head serializes"),
        );
        let register: Value =
            serde_json::from_slice(&export_register(snapshot)).expect("export is valid JSON");
        envelope.insert("register".into(), register);
        envelope.insert("version".into(), Value::from(FORMAT_VERSION));
        let bytes = encode_value(&Value::Object(envelope)).into_bytes();
        self.write_atomic(&self.register_path(), &bytes)?;
        self.committed_log_bytes += tail.len() as u64;
        self.fail_after = None;
        Ok(())
    }
}
