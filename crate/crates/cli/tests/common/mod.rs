#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use keyauth_agent::{keygen, Agent, AutoApprove, FixedPassphrase};
use keyauth_client::{CapturingTransport, HttpTransport};
use keyauth_core::crypto::{generate_keypair, KeyPair};
use keyauth_core::Identifier;
use keyauth_server::{Clock, KeyAuthService, RegistrationMode, ServerConfig, ServerHandle, SystemClock};
use tempfile::TempDir;

pub const PASS: &str = "correct horse battery";

pub fn server_key() -> &'static KeyPair {
    static KEY: OnceLock<KeyPair> = OnceLock::new();
    KEY.get_or_init(|| generate_keypair(2048).unwrap())
}

pub struct Daemon {
    pub handle: ServerHandle,
    pub data_dir: TempDir,
    _keys: TempDir,
}

impl Daemon {
    pub fn start(edit: impl FnOnce(&mut ServerConfig)) -> Daemon {
        Self::start_with_clock(edit, Arc::new(SystemClock))
    }

    pub fn start_with_clock(edit: impl FnOnce(&mut ServerConfig), clock: Arc<dyn Clock>) -> Daemon {
        let data_dir = tempfile::tempdir().unwrap();
        let keys = tempfile::tempdir().unwrap();
        let key_path = keys.path().join("server-key.pem");
        std::fs::write(&key_path, server_key().private_key().to_pkcs8_pem().as_slice()).unwrap();
        let mut config = ServerConfig {
            listen_address: "127.0.0.1:0".parse().unwrap(),
            data_dir: data_dir.path().to_owned(),
            challenge_ttl: 120,
            token_ttl: 900,
            registration_mode: RegistrationMode::Open,
            registration_token: None,
            server_key_path: key_path,
            server_key_bits: 2048,
            challenge_rate_limit: 0,
        };
        edit(&mut config);
        let addr = config.listen_address;
        let service = Arc::new(KeyAuthService::with_clock(config, clock).unwrap());
        Daemon { handle: ServerHandle::start(service, addr).unwrap(), data_dir, _keys: keys }
    }

    pub fn url(&self) -> String {
        self.handle.url()
    }

    pub fn service(&self) -> &KeyAuthService {
        self.handle.service()
    }
}

pub fn id(s: &str) -> Identifier {
    Identifier::new(s).unwrap()
}

/// A fresh sealed 2048-bit identity in its own directory.
pub fn identity() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("identity.kskey");
    keygen(&path, 2048, &mut FixedPassphrase::new(PASS), false, false).unwrap();
    (dir, path)
}

pub type CapturingAgent = Agent<'static, CapturingTransport<HttpTransport>>;

pub fn agent(d: &Daemon, keystore: &Path) -> CapturingAgent {
    let transport = CapturingTransport::new(HttpTransport::new(&d.url()).unwrap());
    Agent::with_transport(transport, keystore, FixedPassphrase::new(PASS), AutoApprove)
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Every byte of every file under `dir`.
pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.clone(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
