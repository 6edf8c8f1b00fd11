//! Assertion tokens: `b64u(payload_json) "." b64u(signature)`, where the
//! signature is RSASSA-PSS/SHA-256 by the server's identity key over the
//! exact payload octets.
//!
//! Verification only needs the server's public key, so relying parties can
//! check tokens offline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::b64;
use crate::crypto::{CryptoError, Fingerprint, PrivateKey, PublicKey, Signature};
use crate::ids::Identifier;

pub const TOKEN_VERSION: &str = "keyauth-token-1";

b64::fixed_bytes!(TokenId, 16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenClaims {
    pub v: String,
    pub user_id: Identifier,
    pub service_id: Identifier,
    pub fingerprint: Fingerprint,
    pub issued_at: u64,
    pub expires_at: u64,
    pub token_id: TokenId,
}

impl TokenClaims {
    /// Claims for a fresh token with a random id, valid for `ttl` seconds.
    pub fn new(
        user_id: Identifier,
        service_id: Identifier,
        fingerprint: Fingerprint,
        issued_at: u64,
        ttl: u64,
    ) -> Self {
        Self {
            v: TOKEN_VERSION.into(),
            user_id,
            service_id,
            fingerprint,
            issued_at,
            expires_at: issued_at + ttl,
            token_id: TokenId::random(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token expired at {}", .0.expires_at)]
    Expired(Box<TokenClaims>),
}

impl TokenError {
    /// Short machine-readable reason, used in verify results.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::Malformed(_) => "malformed",
            Self::BadSignature => "bad-signature",
            Self::Expired(_) => "expired",
        }
    }
}

/// A parsed token. Parsing alone does not authenticate anything; see
/// [`AssertionToken::verify`].
#[derive(Clone, PartialEq, Eq)]
pub struct AssertionToken {
    rendered: String,
    payload: Vec<u8>,
    signature: Signature,
}

impl AssertionToken {
    pub fn mint(server_key: &PrivateKey, claims: &TokenClaims) -> Result<Self, CryptoError> {
        let payload = serde_json::to_vec(claims).expect("claims always serialize");
        let signature = server_key.sign(&payload)?;
        let rendered = format!("{}.{}", b64::encode(&payload), b64::encode(signature.as_bytes()));
        Ok(Self { rendered, payload, signature })
    }

    pub fn parse(text: &str) -> Result<Self, TokenError> {
        let (payload, signature) = text
            .split_once('.')
            .ok_or_else(|| TokenError::Malformed("missing '.' separator".into()))?;
        let payload =
            b64::decode(payload).map_err(|e| TokenError::Malformed(format!("payload: {e}")))?;
        let signature =
            b64::decode(signature).map_err(|e| TokenError::Malformed(format!("signature: {e}")))?;
        if payload.is_empty() || signature.is_empty() {
            return Err(TokenError::Malformed("empty segment".into()));
        }
        Ok(Self {
            rendered: text.to_owned(),
            payload,
            signature: Signature::from_bytes(signature),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.rendered
    }

    pub fn payload_bytes(&self) -> &[u8] {
        &self.payload
    }

    /// Decodes the claims without checking the signature.
    pub fn unverified_claims(&self) -> Result<TokenClaims, TokenError> {
        let claims: TokenClaims = serde_json::from_slice(&self.payload)
            .map_err(|e| TokenError::Malformed(format!("claims: {e}")))?;
        if claims.v != TOKEN_VERSION {
            return Err(TokenError::Malformed(format!("unknown token version {:?}", claims.v)));
        }
        Ok(claims)
    }

    /// Checks the signature over the payload octets, then the claims, then
    /// `now < expires_at`.
    pub fn verify(&self, server_key: &PublicKey, now: u64) -> Result<TokenClaims, TokenError> {
        if !server_key.verify(&self.payload, &self.signature) {
            return Err(TokenError::BadSignature);
        }
        let claims = self.unverified_claims()?;
        if now >= claims.expires_at {
            return Err(TokenError::Expired(Box::new(claims)));
        }
        Ok(claims)
    }
}

impl fmt::Display for AssertionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered)
    }
}

impl fmt::Debug for AssertionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("AssertionToken").field(&self.rendered).finish()
    }
}

/// Parses and verifies a rendered token in one step.
pub fn verify_token(server_key: &PublicKey, token: &str, now: u64) -> Result<TokenClaims, TokenError> {
    AssertionToken::parse(token)?.verify(server_key, now)
}
