//! Core building blocks of KeyAuth, a standalone public-key authentication
//! service.
//!
//! Everything that both ends of the protocol must agree on lives here:
//!
//! - [`protocol`]: the versioned JSON messages exchanged with the daemon,
//!   and their strict encoder/decoder.
//! - [`payload`]: the exact octets an agent signs to answer a challenge.
//! - [`crypto`]: RSA key pairs, RSASSA-PSS/SHA-256 signatures and key
//!   fingerprints, backed by OpenSSL.
//! - [`keystore`]: the passphrase-sealed private key file kept by the agent.
//! - [`token`]: server-signed assertion tokens handed to relying parties.

pub mod b64;
pub mod crypto;
mod ids;
pub mod keystore;
pub mod payload;
pub mod protocol;
pub mod token;

pub use crate::crypto::{Fingerprint, KeyPair, PrivateKey, PublicKey, Signature};
pub use crate::ids::{Identifier, InvalidIdentifier};
pub use crate::payload::{build_signing_payload, SigningPayload};
pub use crate::protocol::{
    decode_message, encode_message, ChallengeId, ErrorCode, Message, Nonce, PollSecret,
    ProtocolError, PROTOCOL_VERSION,
};
pub use crate::token::{AssertionToken, TokenClaims, TokenError};

/// Seconds since the Unix epoch, the time unit used on the wire.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
