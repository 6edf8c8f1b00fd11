//! The KeyAuth wire protocol.
//!
//! Every message travels as a UTF-8 JSON envelope
//!
//! ```json
//! {"v":"keyauth-1","type":"challenge-request","body":{"user_id":"alice","service_id":"mail"}}
//! ```
//!
//! Decoding is strict: the envelope and every body reject unknown fields,
//! every field is required (optional values are sent as an explicit `null`),
//! and binary values are unpadded base64url. Decode failures are classified
//! into the wire error codes of [`ErrorCode`].

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::b64;
use crate::crypto::{Fingerprint, Signature};
use crate::ids::Identifier;

pub const PROTOCOL_VERSION: &str = "keyauth-1";

b64::fixed_bytes!(
    /// Identifies a pending challenge; 16 random bytes.
    ChallengeId,
    16
);
b64::fixed_bytes!(
    /// The fresh random value an agent signs; 32 bytes.
    Nonce,
    32
);
b64::fixed_bytes!(
    /// Shared only with the party that requested the challenge; lets it poll
    /// for the outcome.
    PollSecret,
    16
);

/// The closed set of machine-readable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    MalformedJson,
    UnknownVersion,
    UnknownType,
    SchemaViolation,
    IdFormat,
    Unauthorized,
    InvalidKey,
    UnknownUser,
    UnknownChallenge,
    UnknownKey,
    Expired,
    AlreadyConsumed,
    BadSignature,
    CryptoFailure,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 14] = [
        Self::MalformedJson,
        Self::UnknownVersion,
        Self::UnknownType,
        Self::SchemaViolation,
        Self::IdFormat,
        Self::Unauthorized,
        Self::InvalidKey,
        Self::UnknownUser,
        Self::UnknownChallenge,
        Self::UnknownKey,
        Self::Expired,
        Self::AlreadyConsumed,
        Self::BadSignature,
        Self::CryptoFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MalformedJson => "malformed-json",
            Self::UnknownVersion => "unknown-version",
            Self::UnknownType => "unknown-type",
            Self::SchemaViolation => "schema-violation",
            Self::IdFormat => "id-format",
            Self::Unauthorized => "unauthorized",
            Self::InvalidKey => "invalid-key",
            Self::UnknownUser => "unknown-user",
            Self::UnknownChallenge => "unknown-challenge",
            Self::UnknownKey => "unknown-key",
            Self::Expired => "expired",
            Self::AlreadyConsumed => "already-consumed",
            Self::BadSignature => "bad-signature",
            Self::CryptoFailure => "crypto-failure",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

/// A decode failure, classified by wire error code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unknown protocol version {0:?}")]
    UnknownVersion(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("bad identifier: {0}")]
    IdFormat(String),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        match self {
            Self::MalformedJson(_) => ErrorCode::MalformedJson,
            Self::UnknownVersion(_) => ErrorCode::UnknownVersion,
            Self::UnknownType(_) => ErrorCode::UnknownType,
            Self::SchemaViolation(_) => ErrorCode::SchemaViolation,
            Self::IdFormat(_) => ErrorCode::IdFormat,
        }
    }
}

impl From<crate::ids::InvalidIdentifier> for ProtocolError {
    fn from(e: crate::ids::InvalidIdentifier) -> Self {
        Self::IdFormat(e.to_string())
    }
}

/// Nullable but required: the key must be present, `null` means absent.
fn required<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub user_id: Identifier,
    pub public_key_pem: String,
    #[serde(deserialize_with = "required")]
    pub registration_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterResult {
    pub user_id: Identifier,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeRequest {
    pub user_id: Identifier,
    pub service_id: Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeReply {
    pub challenge_id: ChallengeId,
    pub nonce: Nonce,
    pub expires_at: u64,
    pub poll_secret: PollSecret,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthSubmission {
    pub challenge_id: ChallengeId,
    pub fingerprint: Fingerprint,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthResult {
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollRequest {
    pub challenge_id: ChallengeId,
    pub poll_secret: PollSecret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PollStatus {
    Pending,
    Completed,
    Expired,
}

/// `token` is only ever set on the first poll that observes completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollReply {
    pub status: PollStatus,
    #[serde(deserialize_with = "required")]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub token: String,
}

/// Outcome of server-side token verification. The identity fields are
/// echoed whenever the token payload could be read; `reason` names the
/// failed check when `valid` is false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyResult {
    pub valid: bool,
    #[serde(deserialize_with = "required")]
    pub user_id: Option<Identifier>,
    #[serde(deserialize_with = "required")]
    pub service_id: Option<Identifier>,
    #[serde(deserialize_with = "required")]
    pub expires_at: Option<u64>,
    #[serde(deserialize_with = "required")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorReply {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for ErrorReply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<ProtocolError> for ErrorReply {
    fn from(e: ProtocolError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

/// One protocol message. Encoded as an envelope whose `type` is the name
/// returned by [`Message::type_name`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RegisterRequest(RegisterRequest),
    RegisterResult(RegisterResult),
    ChallengeRequest(ChallengeRequest),
    ChallengeReply(ChallengeReply),
    AuthSubmission(AuthSubmission),
    AuthResult(AuthResult),
    PollRequest(PollRequest),
    PollReply(PollReply),
    VerifyRequest(VerifyRequest),
    VerifyResult(VerifyResult),
    Error(ErrorReply),
}

pub const MESSAGE_TYPES: [&str; 11] = [
    "register-request",
    "register-result",
    "challenge-request",
    "challenge-reply",
    "auth-submission",
    "auth-result",
    "poll-request",
    "poll-reply",
    "verify-request",
    "verify-result",
    "error",
];

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::RegisterRequest(_) => "register-request",
            Self::RegisterResult(_) => "register-result",
            Self::ChallengeRequest(_) => "challenge-request",
            Self::ChallengeReply(_) => "challenge-reply",
            Self::AuthSubmission(_) => "auth-submission",
            Self::AuthResult(_) => "auth-result",
            Self::PollRequest(_) => "poll-request",
            Self::PollReply(_) => "poll-reply",
            Self::VerifyRequest(_) => "verify-request",
            Self::VerifyResult(_) => "verify-result",
            Self::Error(_) => "error",
        }
    }

    fn body(&self) -> Value {
        fn to<T: Serialize>(t: &T) -> Value {
            serde_json::to_value(t).expect("protocol bodies always serialize")
        }
        match self {
            Self::RegisterRequest(m) => to(m),
            Self::RegisterResult(m) => to(m),
            Self::ChallengeRequest(m) => to(m),
            Self::ChallengeReply(m) => to(m),
            Self::AuthSubmission(m) => to(m),
            Self::AuthResult(m) => to(m),
            Self::PollRequest(m) => to(m),
            Self::PollReply(m) => to(m),
            Self::VerifyRequest(m) => to(m),
            Self::VerifyResult(m) => to(m),
            Self::Error(m) => to(m),
        }
    }

    fn check_invariants(&self) -> Result<(), ProtocolError> {
        match self {
            Self::PollReply(r) if r.token.is_some() && r.status != PollStatus::Completed => Err(
                ProtocolError::SchemaViolation("poll-reply carries a token but is not completed".into()),
            ),
            Self::VerifyResult(r) if r.valid && r.reason.is_some() => Err(
                ProtocolError::SchemaViolation("valid verify-result carries a reason".into()),
            ),
            Self::AuthSubmission(s) if s.signature.is_empty() => {
                Err(ProtocolError::SchemaViolation("empty signature".into()))
            }
            _ => Ok(()),
        }
    }
}

macro_rules! message_from {
    ($($variant:ident),*) => {
        $(impl From<$variant> for Message {
            fn from(m: $variant) -> Self {
                Message::$variant(m)
            }
        })*
    };
}

message_from!(
    RegisterRequest,
    RegisterResult,
    ChallengeRequest,
    ChallengeReply,
    AuthSubmission,
    AuthResult,
    PollRequest,
    PollReply,
    VerifyRequest,
    VerifyResult
);

impl From<ErrorReply> for Message {
    fn from(m: ErrorReply) -> Self {
        Message::Error(m)
    }
}

/// Serializes a message into its JSON envelope.
pub fn encode_message(message: &Message) -> Vec<u8> {
    let mut envelope = Map::with_capacity(3);
    envelope.insert("v".into(), Value::from(PROTOCOL_VERSION));
    envelope.insert("type".into(), Value::from(message.type_name()));
    envelope.insert("body".into(), message.body());
    serde_json::to_vec(&Value::Object(envelope)).expect("JSON values always serialize")
}

/// Strictly parses a JSON envelope.
///
/// Checks run in order: JSON syntax, envelope shape, version, type,
/// identifier fields, then the body schema.
pub fn decode_message(raw: &[u8]) -> Result<Message, ProtocolError> {
    let value: Value =
        serde_json::from_slice(raw).map_err(|e| ProtocolError::MalformedJson(e.to_string()))?;
    let Value::Object(mut envelope) = value else {
        return Err(ProtocolError::SchemaViolation("envelope must be a JSON object".into()));
    };
    if let Some(extra) = envelope.keys().find(|k| !matches!(k.as_str(), "v" | "type" | "body")) {
        return Err(ProtocolError::SchemaViolation(format!("unknown envelope field {extra:?}")));
    }
    let version = take_string(&mut envelope, "v")?;
    let type_name = take_string(&mut envelope, "type")?;
    let body = envelope
        .remove("body")
        .ok_or_else(|| ProtocolError::SchemaViolation("missing field `body`".into()))?;

    if version != PROTOCOL_VERSION {
        return Err(ProtocolError::UnknownVersion(version));
    }
    if !MESSAGE_TYPES.contains(&type_name.as_str()) {
        return Err(ProtocolError::UnknownType(type_name));
    }
    let Value::Object(body) = body else {
        return Err(ProtocolError::SchemaViolation("body must be a JSON object".into()));
    };
    for field in ["user_id", "service_id"] {
        if let Some(Value::String(id)) = body.get(field) {
            if !Identifier::is_valid(id) {
                return Err(ProtocolError::IdFormat(format!("{field} {id:?}")));
            }
        }
    }

    let body = Value::Object(body);
    let message = match type_name.as_str() {
        "register-request" => Message::RegisterRequest(parse_body(body)?),
        "register-result" => Message::RegisterResult(parse_body(body)?),
        "challenge-request" => Message::ChallengeRequest(parse_body(body)?),
        "challenge-reply" => Message::ChallengeReply(parse_body(body)?),
        "auth-submission" => Message::AuthSubmission(parse_body(body)?),
        "auth-result" => Message::AuthResult(parse_body(body)?),
        "poll-request" => Message::PollRequest(parse_body(body)?),
        "poll-reply" => Message::PollReply(parse_body(body)?),
        "verify-request" => Message::VerifyRequest(parse_body(body)?),
        "verify-result" => Message::VerifyResult(parse_body(body)?),
        "error" => Message::Error(parse_body(body)?),
        other => unreachable!("type {other:?} listed in MESSAGE_TYPES but not decoded"),
    };
    message.check_invariants()?;
    Ok(message)
}

fn take_string(envelope: &mut Map<String, Value>, field: &str) -> Result<String, ProtocolError> {
    match envelope.remove(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ProtocolError::SchemaViolation(format!("`{field}` must be a string"))),
        None => Err(ProtocolError::SchemaViolation(format!("missing field `{field}`"))),
    }
}

fn parse_body<T: DeserializeOwned>(body: Value) -> Result<T, ProtocolError> {
    serde_json::from_value(body).map_err(|e| ProtocolError::SchemaViolation(e.to_string()))
}

/// Decodes a message and requires it to be of one particular kind, used by
/// endpoints that accept a single request type.
pub fn decode_as<T>(raw: &[u8]) -> Result<T, ProtocolError>
where
    T: TryFrom<Message, Error = Message> + MessageKind,
{
    let message = decode_message(raw)?;
    T::try_from(message).map_err(|other| {
        ProtocolError::SchemaViolation(format!(
            "expected a {} message, got {}",
            T::TYPE_NAME,
            other.type_name()
        ))
    })
}

/// Compile-time link between a body struct and its envelope type name.
pub trait MessageKind {
    const TYPE_NAME: &'static str;
}

macro_rules! message_kind {
    ($($variant:ident => $name:literal),* $(,)?) => {
        $(
            impl MessageKind for $variant {
                const TYPE_NAME: &'static str = $name;
            }

            impl TryFrom<Message> for $variant {
                type Error = Message;

                fn try_from(m: Message) -> Result<Self, Message> {
                    match m {
                        Message::$variant(inner) => Ok(inner),
                        other => Err(other),
                    }
                }
            }
        )*
    };
}

message_kind!(
    RegisterRequest => "register-request",
    RegisterResult => "register-result",
    ChallengeRequest => "challenge-request",
    ChallengeReply => "challenge-reply",
    AuthSubmission => "auth-submission",
    AuthResult => "auth-result",
    PollRequest => "poll-request",
    PollReply => "poll-reply",
    VerifyRequest => "verify-request",
    VerifyResult => "verify-result",
);

impl MessageKind for ErrorReply {
    const TYPE_NAME: &'static str = "error";
}

impl TryFrom<Message> for ErrorReply {
    type Error = Message;

    fn try_from(m: Message) -> Result<Self, Message> {
        match m {
            Message::Error(inner) => Ok(inner),
            other => Err(other),
        }
    }
}
