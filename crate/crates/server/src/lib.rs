//! `keyauthd`, the KeyAuth daemon.
//!
//! The daemon keeps a registry of user public keys, issues single-use
//! challenges, checks signed responses and mints assertion tokens that
//! relying parties verify online (`/v1/verify`) or offline with the key from
//! `/v1/server-key`. It stores public keys only.
//!
//! [`KeyAuthService`] implements the operations; [`http`] binds them to
//! HTTP; [`ServerHandle`] runs a daemon in-process.

pub mod challenges;
pub mod clock;
pub mod config;
pub mod http;
mod rate_limit;
pub mod registry;
pub mod server_key;
mod service;

pub use crate::clock::{Clock, ManualClock, SystemClock};
pub use crate::config::{RegistrationMode, ServerConfig};
pub use crate::http::ServerHandle;
pub use crate::service::{KeyAuthService, ServiceResult, StartupError, MIN_EXPIRED_RETENTION};
