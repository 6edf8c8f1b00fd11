//! In-process fixtures shared by the benchmarks.

use std::sync::Arc;

use keyauth_core::crypto::{generate_keypair, KeyPair};
use keyauth_core::protocol::{AuthSubmission, ChallengeReply, ChallengeRequest, RegisterRequest};
use keyauth_core::{build_signing_payload, Identifier};
use keyauth_server::{KeyAuthService, ManualClock, RegistrationMode, ServerConfig};
use tempfile::TempDir;

pub const START: u64 = 1_700_000_000;

/// A daemon without the HTTP layer, one registered user `alice`.
pub struct Bench {
    pub service: KeyAuthService,
    pub clock: Arc<ManualClock>,
    pub user_key: KeyPair,
    _dirs: (TempDir, TempDir),
}

impl Bench {
    pub fn new(bits: u32) -> Self {
        let data = tempfile::tempdir().unwrap();
        let keys = tempfile::tempdir().unwrap();
        let config = ServerConfig {
            listen_address: "127.0.0.1:0".parse().unwrap(),
            data_dir: data.path().to_owned(),
            challenge_ttl: 120,
            token_ttl: 900,
            registration_mode: RegistrationMode::Open,
            registration_token: None,
            server_key_path: keys.path().join("server-key.pem"),
            server_key_bits: bits,
            challenge_rate_limit: 0,
        };
        let clock = Arc::new(ManualClock::new(START));
        let service = KeyAuthService::with_clock(config, clock.clone()).unwrap();
        let user_key = generate_keypair(bits).unwrap();
        service
            .register_key(RegisterRequest {
                user_id: id("alice"),
                public_key_pem: user_key.public_key().to_pem(),
                registration_token: None,
            })
            .unwrap();
        Self { service, clock, user_key, _dirs: (data, keys) }
    }

    pub fn challenge(&self, service_id: &str) -> ChallengeReply {
        self.service
            .issue_challenge(&ChallengeRequest { user_id: id("alice"), service_id: id(service_id) })
            .unwrap()
    }

    pub fn answer(&self, reply: &ChallengeReply, service_id: &str) -> AuthSubmission {
        let payload = build_signing_payload(&reply.challenge_id, &reply.nonce, service_id, "alice").unwrap();
        AuthSubmission {
            challenge_id: reply.challenge_id,
            fingerprint: self.user_key.public_key().fingerprint(),
            signature: self.user_key.private_key().sign(payload.as_bytes()).unwrap(),
        }
    }
}

pub fn id(s: &str) -> Identifier {
    Identifier::new(s).unwrap()
}
