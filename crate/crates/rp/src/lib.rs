//! Relying-party SDK for KeyAuth.
//!
//! An application hands authentication to a KeyAuth daemon in three steps:
//!
//! 1. [`RpSession::begin_auth`] asks the daemon for a challenge. The
//!    application shows the challenge id and nonce to the user, whose agent
//!    answers it, and keeps the poll secret to itself.
//! 2. [`RpSession::await_completion`] polls until the agent has answered
//!    and returns the assertion token.
//! 3. [`RpSession::complete_auth`] verifies the token, offline with the
//!    daemon's public key when one is cached, otherwise through the daemon,
//!    and yields the authenticated identity.
//!
//! The SDK only ever sees identifiers and tokens; user secrets never pass
//! through it.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use keyauth_client::{ClientError, HttpTransport, KeyAuthClient, Transport};
use keyauth_core::protocol::{
    ChallengeReply, ChallengeRequest, ErrorCode, ErrorReply, PollRequest, PollStatus,
    VerifyRequest,
};
use keyauth_core::token::{verify_token, TokenError};
use keyauth_core::{ChallengeId, Identifier, PollSecret, PublicKey};
use parking_lot::RwLock;

/// How long a fetched server key is trusted for offline checks in
/// [`VerifyMode::Auto`].
pub const KEY_CACHE_MAX_AGE: u64 = 24 * 60 * 60;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Check signature and expiry locally with the cached server key,
    /// fetching the key first if none is cached.
    Offline,
    /// Always ask the daemon's `/v1/verify` endpoint.
    Remote,
    /// Offline while the cached key is younger than [`KEY_CACHE_MAX_AGE`];
    /// otherwise remote, then refresh the cache.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RpError {
    #[error("unknown user")]
    UnknownUser,
    #[error("challenge expired before it was answered")]
    Expired,
    #[error("gave up waiting for the challenge to be answered")]
    Timeout,
    #[error("poll secret rejected")]
    Unauthorized,
    #[error("token was already collected by an earlier poll")]
    AlreadyCollected,
    #[error("invalid token: {0}")]
    InvalidToken(String),
    #[error("token expired")]
    ExpiredToken,
    #[error("network error: {0}")]
    Network(String),
    #[error("server error {}: {}", .0.code, .0.message)]
    Server(ErrorReply),
    #[error("unexpected reply: {0}")]
    BadReply(String),
}

impl From<ClientError> for RpError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Server(reply) => match reply.code {
                ErrorCode::UnknownUser => Self::UnknownUser,
                ErrorCode::Expired => Self::Expired,
                ErrorCode::Unauthorized => Self::Unauthorized,
                _ => Self::Server(reply),
            },
            ClientError::Network(m) => Self::Network(m),
            ClientError::BadReply(m) => Self::BadReply(m),
        }
    }
}

/// Who authenticated, for which service, and until when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatedIdentity {
    pub user_id: Identifier,
    pub service_id: Identifier,
    pub expires_at: u64,
}

#[derive(Debug, Clone)]
struct CachedKey {
    pem: String,
    key: PublicKey,
    fetched_at: u64,
}

type NowFn = Arc<dyn Fn() -> u64 + Send + Sync>;

/// A relying party's handle on one KeyAuth daemon. Cheap to share across
/// threads; the only mutable part is the server-key cache.
pub struct RpSession<T = HttpTransport> {
    client: KeyAuthClient<T>,
    verify_mode: VerifyMode,
    cached_key: RwLock<Option<CachedKey>>,
    now: NowFn,
}

impl RpSession<HttpTransport> {
    pub fn new(server_url: &str, verify_mode: VerifyMode) -> Result<Self, RpError> {
        let transport = HttpTransport::new(server_url)?;
        Ok(Self::with_transport(transport, verify_mode))
    }
}

impl<T: Transport> RpSession<T> {
    pub fn with_transport(transport: T, verify_mode: VerifyMode) -> Self {
        Self {
            client: KeyAuthClient::with_transport(transport),
            verify_mode,
            cached_key: RwLock::new(None),
            now: Arc::new(keyauth_core::unix_now),
        }
    }

    /// Replaces the wall clock used for token expiry and cache age.
    pub fn with_clock(mut self, now: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.now = Arc::new(now);
        self
    }

    /// Seeds the key cache, e.g. with a key distributed out of band.
    pub fn with_server_key(self, pem: &str, fetched_at: u64) -> Result<Self, RpError> {
        let key = PublicKey::from_pem(pem).map_err(|e| RpError::BadReply(e.to_string()))?;
        *self.cached_key.write() = Some(CachedKey { pem: pem.to_owned(), key, fetched_at });
        Ok(self)
    }

    pub fn verify_mode(&self) -> VerifyMode {
        self.verify_mode
    }

    pub fn transport(&self) -> &T {
        self.client.transport()
    }

    /// PEM of the cached server key and when it was fetched.
    pub fn cached_server_key(&self) -> Option<(String, u64)> {
        self.cached_key.read().as_ref().map(|c| (c.pem.clone(), c.fetched_at))
    }

    /// Fetches the daemon's token-signing key into the cache.
    pub fn refresh_server_key(&self) -> Result<PublicKey, RpError> {
        let pem = self.client.server_key_pem()?;
        let key = PublicKey::from_pem(&pem).map_err(|e| RpError::BadReply(e.to_string()))?;
        *self.cached_key.write() =
            Some(CachedKey { pem, key: key.clone(), fetched_at: (self.now)() });
        Ok(key)
    }

    /// Requests a challenge for `user_id` logging in to `service_id`.
    pub fn begin_auth(&self, user_id: &Identifier, service_id: &Identifier) -> Result<ChallengeReply, RpError> {
        let reply = self.client.challenge(ChallengeRequest {
            user_id: user_id.clone(),
            service_id: service_id.clone(),
        })?;
        Ok(reply)
    }

    /// Polls every `poll_interval` until the challenge completes, expires,
    /// or `deadline` passes. Each poll is an independent request.
    pub fn await_completion(
        &self,
        challenge_id: &ChallengeId,
        poll_secret: &PollSecret,
        poll_interval: Duration,
        deadline: SystemTime,
    ) -> Result<String, RpError> {
        let request = PollRequest { challenge_id: *challenge_id, poll_secret: *poll_secret };
        loop {
            let reply = self.client.poll(request.clone())?;
            match (reply.status, reply.token) {
                (PollStatus::Completed, Some(token)) => return Ok(token),
                (PollStatus::Completed, None) => return Err(RpError::AlreadyCollected),
                (PollStatus::Expired, _) => return Err(RpError::Expired),
                (PollStatus::Pending, _) => {
                    if SystemTime::now() >= deadline {
                        return Err(RpError::Timeout);
                    }
                    thread::sleep(poll_interval);
                }
            }
        }
    }

    /// [`await_completion`](Self::await_completion) with the default one
    /// second interval and the challenge's own expiry as deadline.
    pub fn await_challenge(&self, challenge: &ChallengeReply) -> Result<String, RpError> {
        self.await_completion(
            &challenge.challenge_id,
            &challenge.poll_secret,
            DEFAULT_POLL_INTERVAL,
            UNIX_EPOCH + Duration::from_secs(challenge.expires_at),
        )
    }

    /// Verifies `token` according to the session's [`VerifyMode`].
    pub fn complete_auth(&self, token: &str) -> Result<AuthenticatedIdentity, RpError> {
        match self.verify_mode {
            VerifyMode::Remote => self.verify_remote(token),
            VerifyMode::Offline => {
                let cached = self.cached_key.read().as_ref().map(|c| c.key.clone());
                let key = match cached {
                    Some(key) => key,
                    None => self.refresh_server_key()?,
                };
                self.verify_offline(&key, token)
            }
            VerifyMode::Auto => {
                let fresh = self
                    .cached_key
                    .read()
                    .as_ref()
                    .filter(|c| (self.now)().saturating_sub(c.fetched_at) < KEY_CACHE_MAX_AGE)
                    .map(|c| c.key.clone());
                match fresh {
                    Some(key) => self.verify_offline(&key, token),
                    None => {
                        let outcome = self.verify_remote(token);
                        if !matches!(outcome, Err(RpError::Network(_))) {
                            // Best effort; the remote answer stands either way.
                            let _ = self.refresh_server_key();
                        }
                        outcome
                    }
                }
            }
        }
    }

    /// Signature and expiry check against `key`; no network.
    pub fn verify_offline(&self, key: &PublicKey, token: &str) -> Result<AuthenticatedIdentity, RpError> {
        match verify_token(key, token, (self.now)()) {
            Ok(claims) => Ok(AuthenticatedIdentity {
                user_id: claims.user_id,
                service_id: claims.service_id,
                expires_at: claims.expires_at,
            }),
            Err(TokenError::Expired(_)) => Err(RpError::ExpiredToken),
            Err(e) => Err(RpError::InvalidToken(e.reason().to_owned())),
        }
    }

    pub fn verify_remote(&self, token: &str) -> Result<AuthenticatedIdentity, RpError> {
        let result = self.client.verify(VerifyRequest { token: token.to_owned() })?;
        if result.valid {
            match (result.user_id, result.service_id, result.expires_at) {
                (Some(user_id), Some(service_id), Some(expires_at)) => {
                    Ok(AuthenticatedIdentity { user_id, service_id, expires_at })
                }
                _ => Err(RpError::BadReply("valid verify-result without identity".into())),
            }
        } else {
            match result.reason.as_deref() {
                Some("expired") => Err(RpError::ExpiredToken),
                Some(reason) => Err(RpError::InvalidToken(reason.to_owned())),
                None => Err(RpError::InvalidToken("unspecified".into())),
            }
        }
    }
}
