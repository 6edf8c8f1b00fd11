//! In-memory store of issued challenges.
//!
//! A challenge moves `Pending -> Consumed` or `Pending -> Expired`; both are
//! terminal. Consumption is a compare-and-set under the store lock, so of
//! any number of racing submissions exactly one wins. Nothing here is
//! persisted: a restart drops outstanding challenges and agents retry.

use std::collections::HashMap;

use keyauth_core::protocol::{ErrorCode, ErrorReply, PollReply, PollStatus};
use keyauth_core::{ChallengeId, Identifier, Nonce, PollSecret};
use parking_lot::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChallengeState {
    Pending,
    Consumed,
    Expired,
}

#[derive(Debug, Clone)]
pub struct PendingChallenge {
    pub challenge_id: ChallengeId,
    pub nonce: Nonce,
    pub user_id: Identifier,
    pub service_id: Identifier,
    pub poll_secret: PollSecret,
    pub issued_at: u64,
    pub expires_at: u64,
    pub state: ChallengeState,
    /// Set together with the `Consumed` state.
    pub result_token: Option<String>,
    token_delivered: bool,
    /// When the challenge reached its terminal state.
    settled_at: Option<u64>,
}

impl PendingChallenge {
    pub fn new(user_id: Identifier, service_id: Identifier, issued_at: u64, ttl: u64) -> Self {
        Self {
            challenge_id: ChallengeId::random(),
            nonce: Nonce::random(),
            user_id,
            service_id,
            poll_secret: PollSecret::random(),
            issued_at,
            expires_at: issued_at + ttl,
            state: ChallengeState::Pending,
            result_token: None,
            token_delivered: false,
            settled_at: None,
        }
    }

    /// Applies the lazy `Pending -> Expired` transition.
    fn refresh(&mut self, now: u64) {
        if self.state == ChallengeState::Pending && now >= self.expires_at {
            self.state = ChallengeState::Expired;
            self.settled_at = Some(self.expires_at);
        }
    }
}

/// Why a consume attempt lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsumeError {
    Unknown,
    Expired,
    AlreadyConsumed,
}

impl ConsumeError {
    pub fn code(self) -> ErrorCode {
        match self {
            Self::Unknown => ErrorCode::UnknownChallenge,
            Self::Expired => ErrorCode::Expired,
            Self::AlreadyConsumed => ErrorCode::AlreadyConsumed,
        }
    }
}

#[derive(Default)]
pub struct ChallengeStore {
    inner: Mutex<HashMap<ChallengeId, PendingChallenge>>,
}

impl ChallengeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, challenge: PendingChallenge) {
        let previous = self.inner.lock().insert(challenge.challenge_id, challenge);
        debug_assert!(previous.is_none(), "challenge id collision");
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Current view of a challenge, or why it cannot be answered.
    ///
    /// Checks in order: existence, expiry, prior consumption.
    pub fn answerable(&self, id: &ChallengeId, now: u64) -> Result<PendingChallenge, ConsumeError> {
        let mut map = self.inner.lock();
        let challenge = map.get_mut(id).ok_or(ConsumeError::Unknown)?;
        challenge.refresh(now);
        Self::check_answerable(challenge, now)?;
        Ok(challenge.clone())
    }

    fn check_answerable(challenge: &PendingChallenge, now: u64) -> Result<(), ConsumeError> {
        if challenge.state == ChallengeState::Expired || now >= challenge.expires_at {
            return Err(ConsumeError::Expired);
        }
        if challenge.state == ChallengeState::Consumed {
            return Err(ConsumeError::AlreadyConsumed);
        }
        Ok(())
    }

    /// Atomically moves a pending challenge to `Consumed`, attaching `token`.
    pub fn consume(&self, id: &ChallengeId, token: String, now: u64) -> Result<(), ConsumeError> {
        let mut map = self.inner.lock();
        let challenge = map.get_mut(id).ok_or(ConsumeError::Unknown)?;
        challenge.refresh(now);
        Self::check_answerable(challenge, now)?;
        challenge.state = ChallengeState::Consumed;
        challenge.result_token = Some(token);
        challenge.settled_at = Some(now);
        Ok(())
    }

    /// Poll on behalf of the holder of the poll secret. The token is handed
    /// out on the first poll after completion only.
    pub fn poll(&self, id: &ChallengeId, secret: &PollSecret, now: u64) -> Result<PollReply, ErrorReply> {
        let mut map = self.inner.lock();
        let challenge = map
            .get_mut(id)
            .ok_or_else(|| ErrorReply::new(ErrorCode::UnknownChallenge, "no such challenge"))?;
        if !openssl::memcmp::eq(challenge.poll_secret.as_bytes(), secret.as_bytes()) {
            return Err(ErrorReply::new(ErrorCode::Unauthorized, "poll secret mismatch"));
        }
        challenge.refresh(now);
        let reply = match challenge.state {
            ChallengeState::Pending => PollReply { status: PollStatus::Pending, token: None },
            ChallengeState::Expired => PollReply { status: PollStatus::Expired, token: None },
            ChallengeState::Consumed => {
                let token = if challenge.token_delivered {
                    None
                } else {
                    challenge.token_delivered = true;
                    challenge.result_token.clone()
                };
                PollReply { status: PollStatus::Completed, token }
            }
        };
        Ok(reply)
    }

    /// Expires every pending challenge with `expires_at <= now` and returns
    /// how many were expired by this call. Consumed challenges are dropped
    /// `consumed_retention` seconds after consumption, expired ones
    /// `expired_retention` seconds after expiry.
    pub fn evict_expired(&self, now: u64, consumed_retention: u64, expired_retention: u64) -> usize {
        let mut map = self.inner.lock();
        let mut expired = 0;
        map.retain(|_, c| {
            if c.state == ChallengeState::Pending && now >= c.expires_at {
                c.refresh(now);
                expired += 1;
            }
            let retention = match c.state {
                ChallengeState::Pending => return true,
                ChallengeState::Consumed => consumed_retention,
                ChallengeState::Expired => expired_retention,
            };
            let settled = c.settled_at.unwrap_or(c.expires_at);
            now < settled.saturating_add(retention)
        });
        expired
    }
}
