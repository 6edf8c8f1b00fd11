//! The key registry: user identifiers bound to public keys.
//!
//! Persisted as one JSON object per line in `registry.jsonl` under the data
//! directory. Every change rewrites the whole file through a temporary
//! sibling and an atomic rename before the in-memory view is updated.
//! Readers share a lock; writers are serialized.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use keyauth_core::{Fingerprint, Identifier, PublicKey};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub const REGISTRY_FILE: &str = "registry.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyStatus {
    Active,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRecord {
    pub user_id: Identifier,
    pub public_key_pem: String,
    pub fingerprint: Fingerprint,
    pub created_at: u64,
    pub status: KeyStatus,
}

/// The currently valid key for one user.
#[derive(Debug, Clone)]
pub struct ActiveKey {
    pub fingerprint: Fingerprint,
    pub public_key: PublicKey,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry I/O at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt registry line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Default)]
struct State {
    records: Vec<KeyRecord>,
    active: HashMap<Identifier, ActiveKey>,
}

pub struct KeyRegistry {
    path: PathBuf,
    state: RwLock<State>,
    writer: Mutex<()>,
}

impl KeyRegistry {
    /// Opens (or creates) the registry in `data_dir`.
    pub fn open(data_dir: &Path) -> Result<Self, RegistryError> {
        let io_err = |source| RegistryError::Io { path: data_dir.to_owned(), source };
        fs::create_dir_all(data_dir).map_err(io_err)?;
        let path = data_dir.join(REGISTRY_FILE);
        let state = match fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::default(),
            Err(source) => return Err(RegistryError::Io { path, source }),
        };
        Ok(Self { path, state: RwLock::new(state), writer: Mutex::new(()) })
    }

    fn parse(text: &str) -> Result<State, RegistryError> {
        let mut state = State::default();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let corrupt = |reason: String| RegistryError::Corrupt { line: n + 1, reason };
            let record: KeyRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let key = PublicKey::from_pem(&record.public_key_pem).map_err(|e| corrupt(e.to_string()))?;
            if key.fingerprint() != record.fingerprint {
                return Err(corrupt("fingerprint does not match key".into()));
            }
            if record.status == KeyStatus::Active {
                let previous = state.active.insert(
                    record.user_id.clone(),
                    ActiveKey { fingerprint: record.fingerprint, public_key: key },
                );
                if previous.is_some() {
                    return Err(corrupt(format!("second active key for {}", record.user_id)));
                }
            }
            state.records.push(record);
        }
        Ok(state)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn active_key(&self, user_id: &Identifier) -> Option<ActiveKey> {
        self.state.read().active.get(user_id).cloned()
    }

    pub fn records(&self) -> Vec<KeyRecord> {
        self.state.read().records.clone()
    }

    /// Makes `key` the active key for `user_id`, marking any previous active
    /// record as replaced. Returns once the change is on disk.
    pub fn register(
        &self,
        user_id: &Identifier,
        key: PublicKey,
        now: u64,
    ) -> Result<KeyRecord, RegistryError> {
        let _writer = self.writer.lock();
        let fingerprint = key.fingerprint();
        let record = KeyRecord {
            user_id: user_id.clone(),
            public_key_pem: key.to_pem(),
            fingerprint,
            created_at: now,
            status: KeyStatus::Active,
        };

        let mut records = self.state.read().records.clone();
        for r in records.iter_mut().filter(|r| &r.user_id == user_id) {
            r.status = KeyStatus::Replaced;
        }
        records.push(record.clone());
        self.persist(&records)?;

        let mut state = self.state.write();
        state.records = records;
        state.active.insert(user_id.clone(), ActiveKey { fingerprint, public_key: key });
        Ok(record)
    }

    fn persist(&self, records: &[KeyRecord]) -> Result<(), RegistryError> {
        let dir = self.path.parent().expect("registry path has a parent");
        let io_err = |source| RegistryError::Io { path: self.path.clone(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        {
            let mut out = std::io::BufWriter::new(tmp.as_file_mut());
            for r in records {
                serde_json::to_writer(&mut out, r).expect("records always serialize");
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
        }
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&self.path).map_err(|e| io_err(e.error))?;
        Ok(())
    }
}
