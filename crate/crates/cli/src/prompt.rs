//! Where passphrases and approvals come from.

use std::io::{self, BufRead, Write};

use zeroize::Zeroizing;

use crate::AgentError;

/// Test-only escape hatch for CI; interactive use should leave it unset.
pub const PASSPHRASE_ENV: &str = "KEYAUTH_PASSPHRASE";

pub trait PassphraseSource {
    /// Passphrase for unlocking an existing key file.
    fn unlock(&mut self) -> Result<Zeroizing<String>, AgentError>;

    /// Passphrase for sealing a new key file.
    fn choose(&mut self) -> Result<Zeroizing<String>, AgentError> {
        self.unlock()
    }
}

/// A passphrase known up front.
pub struct FixedPassphrase(pub Zeroizing<String>);

impl FixedPassphrase {
    pub fn new(p: &str) -> Self {
        Self(Zeroizing::new(p.to_owned()))
    }
}

impl PassphraseSource for FixedPassphrase {
    fn unlock(&mut self) -> Result<Zeroizing<String>, AgentError> {
        Ok(self.0.clone())
    }
}

/// `KEYAUTH_PASSPHRASE` when set, otherwise a non-echoing terminal read.
#[derive(Debug, Default)]
pub struct TerminalPassphrase;

impl TerminalPassphrase {
    fn read(prompt: &str) -> Result<Zeroizing<String>, AgentError> {
        if let Ok(p) = std::env::var(PASSPHRASE_ENV) {
            return Ok(Zeroizing::new(p));
        }
        rpassword::prompt_password(prompt)
            .map(Zeroizing::new)
            .map_err(|e| AgentError::Input(format!("reading passphrase: {e}")))
    }
}

impl PassphraseSource for TerminalPassphrase {
    fn unlock(&mut self) -> Result<Zeroizing<String>, AgentError> {
        Self::read("Passphrase: ")
    }

    fn choose(&mut self) -> Result<Zeroizing<String>, AgentError> {
        if std::env::var_os(PASSPHRASE_ENV).is_some() {
            return Self::read("");
        }
        let first = Self::read("New passphrase: ")?;
        let second = Self::read("Repeat passphrase: ")?;
        if *first != *second {
            return Err(AgentError::Input("passphrases do not match".into()));
        }
        Ok(first)
    }
}

pub fn approval_prompt(service_id: &str, user_id: &str) -> String {
    format!("Approve sign-in to {service_id} as {user_id}? [y/N]")
}

pub trait Approver {
    fn approve(&mut self, service_id: &str, user_id: &str) -> Result<bool, AgentError>;
}

/// Approves everything (`--yes`).
#[derive(Debug, Default, Clone, Copy)]
pub struct AutoApprove;

impl Approver for AutoApprove {
    fn approve(&mut self, _: &str, _: &str) -> Result<bool, AgentError> {
        Ok(true)
    }
}

impl<F: FnMut(&str, &str) -> bool> Approver for F {
    fn approve(&mut self, service_id: &str, user_id: &str) -> Result<bool, AgentError> {
        Ok(self(service_id, user_id))
    }
}

/// Asks on stderr, reads a line from stdin. Anything but y/yes declines,
/// including end of input.
#[derive(Debug, Default)]
pub struct TerminalApprover;

impl Approver for TerminalApprover {
    fn approve(&mut self, service_id: &str, user_id: &str) -> Result<bool, AgentError> {
        let mut err = io::stderr().lock();
        write!(err, "{} ", approval_prompt(service_id, user_id))
            .and_then(|_| err.flush())
            .map_err(|e| AgentError::Input(e.to_string()))?;
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line).map_err(|e| AgentError::Input(e.to_string()))?;
        Ok(matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes"))
    }
}
