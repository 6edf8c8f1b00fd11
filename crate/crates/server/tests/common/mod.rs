#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, OnceLock};

use keyauth_core::crypto::{generate_keypair, KeyPair};
use keyauth_core::protocol::{AuthSubmission, ChallengeReply, ChallengeRequest, RegisterRequest};
use keyauth_core::{build_signing_payload, Identifier};
use keyauth_server::{KeyAuthService, ManualClock, RegistrationMode, ServerConfig};
use tempfile::TempDir;

pub const T0: u64 = 1_700_000_000;

/// A few pre-generated user keys; key generation dominates test time otherwise.
pub fn user_keys() -> &'static [KeyPair] {
    static KEYS: OnceLock<Vec<KeyPair>> = OnceLock::new();
    KEYS.get_or_init(|| (0..3).map(|_| generate_keypair(2048).unwrap()).collect())
}

fn server_key_pem() -> &'static [u8] {
    static PEM: OnceLock<Vec<u8>> = OnceLock::new();
    PEM.get_or_init(|| generate_keypair(2048).unwrap().private_key().to_pkcs8_pem().to_vec())
}

pub fn id(s: &str) -> Identifier {
    Identifier::new(s).unwrap()
}

pub struct Fixture {
    pub service: Arc<KeyAuthService>,
    pub clock: Arc<ManualClock>,
    pub data_dir: TempDir,
    pub key_dir: TempDir,
}

pub fn config(data_dir: &Path, key_dir: &Path) -> ServerConfig {
    let key_path = key_dir.join("server-key.pem");
    if !key_path.exists() {
        std::fs::write(&key_path, server_key_pem()).unwrap();
    }
    ServerConfig {
        listen_address: "127.0.0.1:0".parse().unwrap(),
        data_dir: data_dir.to_owned(),
        challenge_ttl: 120,
        token_ttl: 900,
        registration_mode: RegistrationMode::Open,
        registration_token: None,
        server_key_path: key_path,
        server_key_bits: 2048,
        challenge_rate_limit: 0,
    }
}

pub fn fixture_with(edit: impl FnOnce(&mut ServerConfig)) -> Fixture {
    let data_dir = tempfile::tempdir().unwrap();
    let key_dir = tempfile::tempdir().unwrap();
    let mut cfg = config(data_dir.path(), key_dir.path());
    edit(&mut cfg);
    let clock = Arc::new(ManualClock::new(T0));
    let service = Arc::new(KeyAuthService::with_clock(cfg, clock.clone()).unwrap());
    Fixture { service, clock, data_dir, key_dir }
}

pub fn fixture() -> Fixture {
    fixture_with(|_| {})
}

impl Fixture {
    pub fn register(&self, user: &str, key: &KeyPair) {
        self.service
            .register_key(RegisterRequest {
                user_id: id(user),
                public_key_pem: key.public_key().to_pem(),
                registration_token: None,
            })
            .unwrap();
    }

    pub fn challenge(&self, user: &str, service: &str) -> ChallengeReply {
        self.service
            .issue_challenge(&ChallengeRequest { user_id: id(user), service_id: id(service) })
            .unwrap()
    }
}

/// Signs the payload for `reply` the way an agent does.
pub fn answer(reply: &ChallengeReply, key: &KeyPair, user: &str, service: &str) -> AuthSubmission {
    let payload = build_signing_payload(&reply.challenge_id, &reply.nonce, service, user).unwrap();
    AuthSubmission {
        challenge_id: reply.challenge_id,
        fingerprint: key.public_key().fingerprint(),
        signature: key.private_key().sign(payload.as_bytes()).unwrap(),
    }
}
