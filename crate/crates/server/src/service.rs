//! The KeyAuth operations, independent of any transport.
//!
//! Every call stands alone: nothing about a client is remembered between
//! calls except the challenge it was issued, which is addressed by id.

use std::sync::Arc;

use keyauth_core::crypto::{CryptoError, KeyPair};
use keyauth_core::protocol::{
    AuthResult, AuthSubmission, ChallengeReply, ChallengeRequest, ErrorCode, ErrorReply,
    PollReply, PollRequest, RegisterRequest, RegisterResult, VerifyRequest, VerifyResult,
};
use keyauth_core::token::{AssertionToken, TokenClaims, TokenError};
use keyauth_core::{build_signing_payload, Fingerprint, PublicKey};
use openssl::hash::{hash, MessageDigest};

use crate::challenges::{ChallengeStore, PendingChallenge};
use crate::clock::{Clock, SystemClock};
use crate::config::{RegistrationMode, ServerConfig};
use crate::registry::{KeyRecord, KeyRegistry, RegistryError};
use crate::server_key::{self, ServerKeyError};

pub type ServiceResult<T> = Result<T, ErrorReply>;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    ServerKey(#[from] ServerKeyError),
}

/// Minimum time an expired challenge is remembered, so a slow agent is
/// told `expired` rather than `unknown-challenge`.
pub const MIN_EXPIRED_RETENTION: u64 = 60;

pub struct KeyAuthService {
    config: ServerConfig,
    registry: KeyRegistry,
    challenges: ChallengeStore,
    server_key: KeyPair,
    server_key_pem: String,
    clock: Arc<dyn Clock>,
}

impl KeyAuthService {
    pub fn open(config: ServerConfig) -> Result<Self, StartupError> {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    pub fn with_clock(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, StartupError> {
        config.validate()?;
        let server_key = server_key::load_or_generate(&config.server_key_path, config.server_key_bits)?;
        if config.server_key_path.starts_with(&config.data_dir) {
            tracing::warn!(
                path = %config.server_key_path.display(),
                "server key is stored inside the data directory"
            );
        }
        let registry = KeyRegistry::open(&config.data_dir)?;
        let server_key_pem = server_key.public_key().to_pem();
        Ok(Self {
            config,
            registry,
            challenges: ChallengeStore::new(),
            server_key,
            server_key_pem,
            clock,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn challenges(&self) -> &ChallengeStore {
        &self.challenges
    }

    /// PEM of the token-signing public key.
    pub fn server_key_pem(&self) -> &str {
        &self.server_key_pem
    }

    pub fn server_public_key(&self) -> &PublicKey {
        self.server_key.public_key()
    }

    pub fn server_fingerprint(&self) -> Fingerprint {
        self.server_key.public_key().fingerprint()
    }

    pub fn register_key(&self, req: RegisterRequest) -> ServiceResult<RegisterResult> {
        if self.config.registration_mode == RegistrationMode::Token {
            let expected = self.config.registration_token.as_deref().unwrap_or_default();
            let presented = req.registration_token.as_deref().unwrap_or_default();
            if !secrets_match(expected, presented) {
                return Err(ErrorReply::new(ErrorCode::Unauthorized, "registration token rejected"));
            }
        }
        let key = PublicKey::from_pem(&req.public_key_pem)
            .map_err(|e| ErrorReply::new(ErrorCode::InvalidKey, e.to_string()))?;
        key.ensure_allowed_size()
            .map_err(|e| ErrorReply::new(ErrorCode::InvalidKey, e.to_string()))?;

        let record: KeyRecord = self.registry.register(&req.user_id, key, self.now()).map_err(|e| {
            tracing::error!(error = %e, "registry write failed");
            ErrorReply::new(ErrorCode::CryptoFailure, "registry write failed")
        })?;
        tracing::info!(user = %record.user_id, fingerprint = %record.fingerprint, "key registered");
        Ok(RegisterResult { user_id: record.user_id, fingerprint: record.fingerprint })
    }

    pub fn issue_challenge(&self, req: &ChallengeRequest) -> ServiceResult<ChallengeReply> {
        if self.registry.active_key(&req.user_id).is_none() {
            return Err(ErrorReply::new(ErrorCode::UnknownUser, format!("no key for {}", req.user_id)));
        }
        let challenge = PendingChallenge::new(
            req.user_id.clone(),
            req.service_id.clone(),
            self.now(),
            self.config.challenge_ttl,
        );
        let reply = ChallengeReply {
            challenge_id: challenge.challenge_id,
            nonce: challenge.nonce,
            expires_at: challenge.expires_at,
            poll_secret: challenge.poll_secret,
        };
        self.challenges.insert(challenge);
        Ok(reply)
    }

    /// Checks, in this order: the challenge exists, has not expired, has not
    /// been consumed, the fingerprint names the user's active key, and the
    /// signature verifies over the signing payload. The first failing check
    /// determines the error code.
    pub fn submit_response(&self, sub: &AuthSubmission) -> ServiceResult<AuthResult> {
        let challenge = self
            .challenges
            .answerable(&sub.challenge_id, self.now())
            .map_err(|e| ErrorReply::new(e.code(), "challenge cannot be answered"))?;

        let active = self
            .registry
            .active_key(&challenge.user_id)
            .filter(|k| k.fingerprint == sub.fingerprint)
            .ok_or_else(|| {
                ErrorReply::new(ErrorCode::UnknownKey, "fingerprint is not the user's active key")
            })?;

        let payload = build_signing_payload(
            &challenge.challenge_id,
            &challenge.nonce,
            challenge.service_id.as_str(),
            challenge.user_id.as_str(),
        )
        .map_err(ErrorReply::from)?;
        if !active.public_key.verify(payload.as_bytes(), &sub.signature) {
            return Err(ErrorReply::new(ErrorCode::BadSignature, "signature does not verify"));
        }

        let now = self.now();
        let claims = TokenClaims::new(
            challenge.user_id.clone(),
            challenge.service_id.clone(),
            active.fingerprint,
            now,
            self.config.token_ttl,
        );
        let token = AssertionToken::mint(self.server_key.private_key(), &claims)
            .map_err(crypto_failure)?
            .to_string();
        self.challenges
            .consume(&challenge.challenge_id, token.clone(), now)
            .map_err(|e| ErrorReply::new(e.code(), "challenge cannot be answered"))?;
        tracing::info!(
            user = %claims.user_id,
            service = %claims.service_id,
            token_id = %claims.token_id,
            "authenticated"
        );
        Ok(AuthResult { token })
    }

    pub fn poll_challenge(&self, req: &PollRequest) -> ServiceResult<PollReply> {
        self.challenges.poll(&req.challenge_id, &req.poll_secret, self.now())
    }

    /// Never fails: problems are reported as `valid: false` with a reason.
    pub fn verify_token(&self, req: &VerifyRequest) -> VerifyResult {
        let parsed = match AssertionToken::parse(&req.token) {
            Ok(t) => t,
            Err(e) => return invalid(None, &e),
        };
        match parsed.verify(self.server_key.public_key(), self.now()) {
            Ok(claims) => VerifyResult {
                valid: true,
                user_id: Some(claims.user_id),
                service_id: Some(claims.service_id),
                expires_at: Some(claims.expires_at),
                reason: None,
            },
            Err(TokenError::Expired(claims)) => invalid(Some(&claims), &TokenError::Expired(claims.clone())),
            Err(e) => invalid(None, &e),
        }
    }

    /// Drops settled challenges once late submissions no longer need an
    /// accurate `expired` or `already-consumed` answer.
    pub fn evict_expired(&self, now: u64) -> usize {
        let expired_retention = self.config.challenge_ttl.max(MIN_EXPIRED_RETENTION);
        self.challenges
            .evict_expired(now, self.config.token_ttl, expired_retention)
    }
}

fn invalid(claims: Option<&TokenClaims>, error: &TokenError) -> VerifyResult {
    VerifyResult {
        valid: false,
        user_id: claims.map(|c| c.user_id.clone()),
        service_id: claims.map(|c| c.service_id.clone()),
        expires_at: claims.map(|c| c.expires_at),
        reason: Some(error.reason().to_owned()),
    }
}

fn crypto_failure(e: CryptoError) -> ErrorReply {
    tracing::error!(error = %e, "crypto provider failure");
    ErrorReply::new(ErrorCode::CryptoFailure, "internal crypto failure")
}

/// Constant-time comparison of two secrets of possibly different lengths.
fn secrets_match(expected: &str, presented: &str) -> bool {
    let digest = |s: &str| hash(MessageDigest::sha256(), s.as_bytes()).expect("SHA-256");
    !expected.is_empty() && openssl::memcmp::eq(&digest(expected), &digest(presented))
}
