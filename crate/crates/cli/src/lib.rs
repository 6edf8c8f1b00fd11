//! The KeyAuth agent: one key pair for every service, sealed at rest, and
//! an approval gate in front of every signature.
//!
//! The binary `keyauth` is a thin shell over [`Agent`] and [`keygen`].

use std::path::{Path, PathBuf};

use keyauth_client::{ClientError, HttpTransport, KeyAuthClient, Transport};
use keyauth_core::crypto::{generate_keypair, CryptoError, ALLOWED_BITS};
use keyauth_core::keystore::{open_private_key, seal_private_key, EncryptedKeyFile, KeystoreError};
use keyauth_core::protocol::{AuthSubmission, ChallengeRequest, ErrorReply, RegisterRequest, RegisterResult};
use keyauth_core::{build_signing_payload, ChallengeId, Fingerprint, Identifier, Nonce, PrivateKey};

pub mod config;
pub mod prompt;

pub use config::AgentConfig;
pub use prompt::{approval_prompt, Approver, AutoApprove, FixedPassphrase, PassphraseSource, TerminalApprover, TerminalPassphrase};

pub const MIN_PASSPHRASE_CHARS: usize = 8;

pub mod exit {
    pub const OK: u8 = 0;
    pub const DECLINED: u8 = 2;
    pub const PROTOCOL: u8 = 3;
    pub const NETWORK: u8 = 4;
    pub const LOCAL: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("sign-in declined")]
    Declined,
    #[error("key file already exists: {} (use --force to replace it)", .0.display())]
    KeyExists(PathBuf),
    #[error("no key file at {}; run `keyauth keygen` first", .0.display())]
    NoKey(PathBuf),
    #[error("passphrase shorter than {MIN_PASSPHRASE_CHARS} characters")]
    WeakPassphrase,
    #[error("{}: {}", .0.code, .0.message)]
    Server(ErrorReply),
    #[error("unexpected server reply: {0}")]
    BadReply(String),
    #[error("network error: {0}")]
    Network(String),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("{0}")]
    Input(String),
}

impl AgentError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Declined => exit::DECLINED,
            Self::Server(_) | Self::BadReply(_) => exit::PROTOCOL,
            Self::Network(_) => exit::NETWORK,
            _ => exit::LOCAL,
        }
    }
}

impl From<ClientError> for AgentError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Server(reply) => Self::Server(reply),
            ClientError::Network(m) => Self::Network(m),
            ClientError::BadReply(m) => Self::BadReply(m),
        }
    }
}

/// Generates a key pair and seals it to `path`. Returns the fingerprint.
pub fn keygen(
    path: &Path,
    bits: u32,
    passphrase: &mut dyn PassphraseSource,
    force: bool,
    allow_weak: bool,
) -> Result<Fingerprint, AgentError> {
    if !ALLOWED_BITS.contains(&bits) {
        return Err(CryptoError::UnsupportedSize(bits).into());
    }
    if !force && path.exists() {
        return Err(AgentError::KeyExists(path.to_owned()));
    }
    let pass = passphrase.choose()?;
    if !allow_weak && pass.chars().count() < MIN_PASSPHRASE_CHARS {
        return Err(AgentError::WeakPassphrase);
    }
    let pair = generate_keypair(bits)?;
    let sealed = seal_private_key(pair.private_key(), &pass)?;
    sealed.write_to(path, force).map_err(|e| match e {
        KeystoreError::FileExists(_) => AgentError::KeyExists(path.to_owned()),
        other => other.into(),
    })?;
    Ok(sealed.fingerprint())
}

/// One identity talking to one server. The private key is unlocked lazily,
/// at most once, and only after the first approval (or registration).
pub struct Agent<'a, T = HttpTransport> {
    client: KeyAuthClient<T>,
    keystore_path: PathBuf,
    passphrase: Box<dyn PassphraseSource + 'a>,
    approver: Box<dyn Approver + 'a>,
    key: Option<(PrivateKey, Fingerprint)>,
    signatures: usize,
}

impl<'a> Agent<'a, HttpTransport> {
    pub fn connect(
        server_url: &str,
        keystore_path: impl Into<PathBuf>,
        passphrase: impl PassphraseSource + 'a,
        approver: impl Approver + 'a,
    ) -> Result<Self, AgentError> {
        let transport = HttpTransport::new(server_url)?;
        Ok(Self::with_transport(transport, keystore_path, passphrase, approver))
    }
}

impl<'a, T: Transport> Agent<'a, T> {
    pub fn with_transport(
        transport: T,
        keystore_path: impl Into<PathBuf>,
        passphrase: impl PassphraseSource + 'a,
        approver: impl Approver + 'a,
    ) -> Self {
        Self {
            client: KeyAuthClient::with_transport(transport),
            keystore_path: keystore_path.into(),
            passphrase: Box::new(passphrase),
            approver: Box::new(approver),
            key: None,
            signatures: 0,
        }
    }

    pub fn transport(&self) -> &T {
        self.client.transport()
    }

    /// Number of signatures produced so far.
    pub fn signatures(&self) -> usize {
        self.signatures
    }

    pub fn is_unlocked(&self) -> bool {
        self.key.is_some()
    }

    fn unlock(&mut self) -> Result<&(PrivateKey, Fingerprint), AgentError> {
        if self.key.is_none() {
            let file = EncryptedKeyFile::read_from(&self.keystore_path).map_err(|e| match e {
                KeystoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    AgentError::NoKey(self.keystore_path.clone())
                }
                other => other.into(),
            })?;
            let pass = self.passphrase.unlock()?;
            let key = open_private_key(&file, &pass)?;
            self.key = Some((key, file.fingerprint()));
        }
        Ok(self.key.as_ref().expect("unlocked above"))
    }

    /// Registers this identity's public key under `user_id`.
    pub fn register(
        &mut self,
        user_id: &Identifier,
        registration_token: Option<String>,
    ) -> Result<RegisterResult, AgentError> {
        let public_key_pem = self.unlock()?.0.public_key().to_pem();
        Ok(self.client.register(RegisterRequest {
            user_id: user_id.clone(),
            public_key_pem,
            registration_token,
        })?)
    }

    /// Requests a challenge, asks for approval, answers it and returns the
    /// assertion token.
    pub fn login(&mut self, user_id: &Identifier, service_id: &Identifier) -> Result<String, AgentError> {
        let reply = self.client.challenge(ChallengeRequest {
            user_id: user_id.clone(),
            service_id: service_id.clone(),
        })?;
        self.answer(&reply.challenge_id, &reply.nonce, service_id, user_id)
    }

    /// Answers a challenge some relying party obtained. The token goes to
    /// whoever holds the poll secret, so it is not returned here.
    pub fn respond(
        &mut self,
        challenge_id: &ChallengeId,
        nonce: &Nonce,
        service_id: &Identifier,
        user_id: &Identifier,
    ) -> Result<(), AgentError> {
        self.answer(challenge_id, nonce, service_id, user_id).map(drop)
    }

    fn answer(
        &mut self,
        challenge_id: &ChallengeId,
        nonce: &Nonce,
        service_id: &Identifier,
        user_id: &Identifier,
    ) -> Result<String, AgentError> {
        if !self.approver.approve(service_id.as_str(), user_id.as_str())? {
            return Err(AgentError::Declined);
        }
        let payload = build_signing_payload(challenge_id, nonce, service_id.as_str(), user_id.as_str())
            .map_err(|e| AgentError::Input(e.to_string()))?;
        let (key, fingerprint) = self.unlock()?;
        let submission = AuthSubmission {
            challenge_id: *challenge_id,
            fingerprint: *fingerprint,
            signature: key.sign(payload.as_bytes())?,
        };
        self.signatures += 1;
        Ok(self.client.authenticate(submission)?.token)
    }
}
