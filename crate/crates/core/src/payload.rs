//! The octets an agent signs to answer a challenge:
//!
//! ```text
//! keyauth-1 LF b64u(challenge_id) LF b64u(nonce) LF b64u(service_id) LF b64u(user_id)
//! ```
//!
//! Each field is encoded separately as unpadded base64url, whose alphabet has
//! no LF, so the framing is unambiguous and distinct tuples give distinct
//! payloads.

use crate::b64;
use crate::ids::Identifier;
use crate::protocol::{ChallengeId, Nonce, ProtocolError, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SigningPayload(Vec<u8>);

impl SigningPayload {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl AsRef<[u8]> for SigningPayload {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Builds the signing payload, rejecting identifiers outside the ID alphabet.
pub fn build_signing_payload(
    challenge_id: &ChallengeId,
    nonce: &Nonce,
    service_id: &str,
    user_id: &str,
) -> Result<SigningPayload, ProtocolError> {
    let service_id = Identifier::new(service_id)?;
    let user_id = Identifier::new(user_id)?;

    let segments = [
        b64::encode(challenge_id.as_bytes()),
        b64::encode(nonce.as_bytes()),
        b64::encode(service_id.as_str()),
        b64::encode(user_id.as_str()),
    ];
    let mut bytes = Vec::with_capacity(
        PROTOCOL_VERSION.len() + segments.iter().map(|s| s.len() + 1).sum::<usize>(),
    );
    bytes.extend_from_slice(PROTOCOL_VERSION.as_bytes());
    for segment in &segments {
        bytes.push(b'\n');
        bytes.extend_from_slice(segment.as_bytes());
    }
    Ok(SigningPayload(bytes))
}
