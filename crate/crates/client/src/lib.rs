//! Typed client for the KeyAuth HTTP endpoints.
//!
//! [`KeyAuthClient`] speaks the protocol messages over a [`Transport`].
//! The default [`HttpTransport`] opens a fresh connection for every request;
//! the daemon keeps no per-connection state, so nothing is gained by
//! holding one open. [`CapturingTransport`] records raw request and reply
//! bodies for inspection.

mod transport;

use keyauth_core::protocol::{
    decode_message, AuthResult, AuthSubmission, ChallengeReply, ChallengeRequest, ErrorCode,
    ErrorReply, MessageKind, PollReply, PollRequest, RegisterRequest, RegisterResult,
    VerifyRequest, VerifyResult,
};
use keyauth_core::{encode_message, Message, PublicKey};

pub use crate::transport::{CapturingTransport, Exchange, HttpTransport, RawReply, Transport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// The daemon answered with an `error` message.
    #[error("server error {}: {}", .0.code, .0.message)]
    Server(ErrorReply),
    #[error("network error: {0}")]
    Network(String),
    /// The daemon's reply could not be understood.
    #[error("unexpected reply: {0}")]
    BadReply(String),
}

impl ClientError {
    /// The server's error code, if the failure came from the server.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            Self::Server(reply) => Some(reply.code),
            _ => None,
        }
    }
}

pub mod paths {
    pub const REGISTER: &str = "/v1/register";
    pub const CHALLENGE: &str = "/v1/challenge";
    pub const AUTHENTICATE: &str = "/v1/authenticate";
    pub const POLL: &str = "/v1/poll";
    pub const VERIFY: &str = "/v1/verify";
    pub const SERVER_KEY: &str = "/v1/server-key";
}

#[derive(Debug, Clone)]
pub struct KeyAuthClient<T = HttpTransport> {
    transport: T,
}

impl KeyAuthClient<HttpTransport> {
    /// Client for the daemon at `base_url`, e.g. `http://127.0.0.1:7450`.
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Ok(Self { transport: HttpTransport::new(base_url)? })
    }
}

impl<T: Transport> KeyAuthClient<T> {
    pub fn with_transport(transport: T) -> Self {
        Self { transport }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn call<Resp>(&self, path: &str, request: Message) -> Result<Resp, ClientError>
    where
        Resp: TryFrom<Message, Error = Message> + MessageKind,
    {
        let reply = self.transport.post(path, encode_message(&request))?;
        let message = decode_message(&reply.body).map_err(|e| {
            ClientError::BadReply(format!("HTTP {} with undecodable body: {e}", reply.status))
        })?;
        match message {
            Message::Error(err) => Err(ClientError::Server(err)),
            other => Resp::try_from(other).map_err(|m| {
                ClientError::BadReply(format!("expected {}, got {}", Resp::TYPE_NAME, m.type_name()))
            }),
        }
    }

    pub fn register(&self, req: RegisterRequest) -> Result<RegisterResult, ClientError> {
        self.call(paths::REGISTER, req.into())
    }

    pub fn challenge(&self, req: ChallengeRequest) -> Result<ChallengeReply, ClientError> {
        self.call(paths::CHALLENGE, req.into())
    }

    pub fn authenticate(&self, sub: AuthSubmission) -> Result<AuthResult, ClientError> {
        self.call(paths::AUTHENTICATE, sub.into())
    }

    pub fn poll(&self, req: PollRequest) -> Result<PollReply, ClientError> {
        self.call(paths::POLL, req.into())
    }

    pub fn verify(&self, req: VerifyRequest) -> Result<VerifyResult, ClientError> {
        self.call(paths::VERIFY, req.into())
    }

    /// PEM of the daemon's token-signing key.
    pub fn server_key_pem(&self) -> Result<String, ClientError> {
        let reply = self.transport.get(paths::SERVER_KEY)?;
        if reply.status != 200 {
            return Err(ClientError::BadReply(format!("server-key returned HTTP {}", reply.status)));
        }
        String::from_utf8(reply.body).map_err(|_| ClientError::BadReply("server key is not UTF-8".into()))
    }

    pub fn server_key(&self) -> Result<PublicKey, ClientError> {
        let pem = self.server_key_pem()?;
        PublicKey::from_pem(&pem).map_err(|e| ClientError::BadReply(format!("server key: {e}")))
    }
}
