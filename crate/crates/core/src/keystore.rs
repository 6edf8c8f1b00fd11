//! Passphrase-sealed private key file kept by the agent.
//!
//! The PKCS#8 DER private key is encrypted with AES-256-GCM under a key
//! derived from the passphrase with scrypt. The scrypt cost parameters are
//! stored in the file so that a file stays openable when defaults change.
//! The format tag and the public-key fingerprint are bound to the ciphertext
//! as associated data.
//!
//! ```json
//! {"version":"keystore-1","kdf":{"name":"scrypt","log_n":15,"r":8,"p":1},
//!  "salt":"...","aead_nonce":"...","ciphertext":"...","fingerprint":"..."}
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use openssl::pkcs5::scrypt;
use openssl::symm::{decrypt_aead, encrypt_aead, Cipher};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::b64;
use crate::crypto::{CryptoError, Fingerprint, PrivateKey};

pub const KEYSTORE_VERSION: &str = "keystore-1";
const KDF_NAME: &str = "scrypt";
const TAG_LEN: usize = 16;
const KEY_LEN: usize = 32;

// Upper bounds accepted when opening; keeps a hostile file from asking for
// gigabytes of memory.
const MAX_LOG_N: u8 = 22;
const MAX_R: u32 = 32;
const MAX_P: u32 = 16;

b64::fixed_bytes!(Salt, 16);
b64::fixed_bytes!(AeadNonce, 12);

#[derive(Debug, thiserror::Error)]
pub enum KeystoreError {
    #[error("passphrase must not be empty")]
    EmptyPassphrase,
    /// Wrong passphrase or a modified file; the two are indistinguishable.
    #[error("wrong passphrase or corrupted key file")]
    BadPassphrase,
    #[error("key file format error: {0}")]
    Format(String),
    #[error("key file already exists: {0}")]
    FileExists(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("key file I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl From<openssl::error::ErrorStack> for KeystoreError {
    fn from(e: openssl::error::ErrorStack) -> Self {
        Self::Crypto(CryptoError::Provider(e))
    }
}

/// scrypt cost: N = 2^log_n, block size r, parallelism p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdfParams {
    pub log_n: u8,
    pub r: u32,
    pub p: u32,
}

impl KdfParams {
    /// Interactive-login cost, about 32 MiB of memory.
    pub const INTERACTIVE: Self = Self { log_n: 15, r: 8, p: 1 };

    fn validate(&self) -> Result<(), KeystoreError> {
        if self.log_n == 0 || self.log_n > MAX_LOG_N || self.r == 0 || self.r > MAX_R {
            return Err(KeystoreError::Format(format!("unsupported scrypt parameters {self:?}")));
        }
        if self.p == 0 || self.p > MAX_P {
            return Err(KeystoreError::Format(format!("unsupported scrypt parameters {self:?}")));
        }
        Ok(())
    }

    fn derive(&self, passphrase: &str, salt: &Salt) -> Result<Zeroizing<[u8; KEY_LEN]>, KeystoreError> {
        self.validate()?;
        let n = 1u64 << self.log_n;
        let (r, p) = (u64::from(self.r), u64::from(self.p));
        let maxmem = 128 * r * (n + p + 2) + (1 << 20);
        let mut key = Zeroizing::new([0u8; KEY_LEN]);
        scrypt(passphrase.as_bytes(), salt.as_bytes(), n, r, p, maxmem, &mut key[..])?;
        Ok(key)
    }
}

impl Default for KdfParams {
    fn default() -> Self {
        Self::INTERACTIVE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KdfSpec {
    name: String,
    log_n: u8,
    r: u32,
    p: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncryptedKeyFile {
    version: String,
    kdf: KdfSpec,
    salt: Salt,
    aead_nonce: AeadNonce,
    #[serde(with = "b64::vec")]
    ciphertext: Vec<u8>,
    fingerprint: Fingerprint,
}

impl EncryptedKeyFile {
    /// Fingerprint of the sealed key's public half; readable without the
    /// passphrase.
    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn kdf_params(&self) -> KdfParams {
        KdfParams { log_n: self.kdf.log_n, r: self.kdf.r, p: self.kdf.p }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("key file always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KeystoreError> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| KeystoreError::Format(e.to_string()))?;
        if file.version != KEYSTORE_VERSION {
            return Err(KeystoreError::Format(format!("unknown version {:?}", file.version)));
        }
        if file.kdf.name != KDF_NAME {
            return Err(KeystoreError::Format(format!("unknown KDF {:?}", file.kdf.name)));
        }
        file.kdf_params().validate()?;
        if file.ciphertext.len() <= TAG_LEN {
            return Err(KeystoreError::Format("ciphertext too short".into()));
        }
        Ok(file)
    }

    pub fn read_from(path: &Path) -> Result<Self, KeystoreError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Writes the file through a temporary sibling and an atomic rename; the
    /// result is readable by the owner only. Without `overwrite` an existing
    /// file is left untouched and [`KeystoreError::FileExists`] is returned.
    pub fn write_to(&self, path: &Path, overwrite: bool) -> Result<(), KeystoreError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir)?;
        if !overwrite && path.exists() {
            return Err(KeystoreError::FileExists(path.display().to_string()));
        }
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_json().as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        let persisted = if overwrite { tmp.persist(path) } else { tmp.persist_noclobber(path) };
        persisted.map_err(|e| {
            if e.error.kind() == std::io::ErrorKind::AlreadyExists {
                KeystoreError::FileExists(path.display().to_string())
            } else {
                KeystoreError::Io(e.error)
            }
        })?;
        Ok(())
    }
}

fn associated_data(fingerprint: &Fingerprint) -> Vec<u8> {
    let mut aad = KEYSTORE_VERSION.as_bytes().to_vec();
    aad.extend_from_slice(fingerprint.as_bytes());
    aad
}

/// Seals `key` with the default interactive KDF cost.
pub fn seal_private_key(key: &PrivateKey, passphrase: &str) -> Result<EncryptedKeyFile, KeystoreError> {
    seal_private_key_with(key, passphrase, KdfParams::default())
}

pub fn seal_private_key_with(
    key: &PrivateKey,
    passphrase: &str,
    params: KdfParams,
) -> Result<EncryptedKeyFile, KeystoreError> {
    if passphrase.is_empty() {
        return Err(KeystoreError::EmptyPassphrase);
    }
    let salt = Salt::random();
    let nonce = AeadNonce::random();
    let fingerprint = key.public_key().fingerprint();
    let wrapping_key = params.derive(passphrase, &salt)?;
    let plaintext = key.to_pkcs8_der();

    let mut tag = [0u8; TAG_LEN];
    let mut ciphertext = encrypt_aead(
        Cipher::aes_256_gcm(),
        &wrapping_key[..],
        Some(nonce.as_bytes()),
        &associated_data(&fingerprint),
        &plaintext,
        &mut tag,
    )?;
    ciphertext.extend_from_slice(&tag);

    Ok(EncryptedKeyFile {
        version: KEYSTORE_VERSION.into(),
        kdf: KdfSpec { name: KDF_NAME.into(), log_n: params.log_n, r: params.r, p: params.p },
        salt,
        aead_nonce: nonce,
        ciphertext,
        fingerprint,
    })
}

/// Re-derives the wrapping key with the file's own KDF parameters and
/// decrypts. Either the original key comes back or nothing does.
pub fn open_private_key(file: &EncryptedKeyFile, passphrase: &str) -> Result<PrivateKey, KeystoreError> {
    if file.ciphertext.len() <= TAG_LEN {
        return Err(KeystoreError::Format("ciphertext too short".into()));
    }
    let wrapping_key = file.kdf_params().derive(passphrase, &file.salt)?;
    let (sealed, tag) = file.ciphertext.split_at(file.ciphertext.len() - TAG_LEN);
    let plaintext = decrypt_aead(
        Cipher::aes_256_gcm(),
        &wrapping_key[..],
        Some(file.aead_nonce.as_bytes()),
        &associated_data(&file.fingerprint),
        sealed,
        tag,
    )
    .map(Zeroizing::new)
    .map_err(|_| KeystoreError::BadPassphrase)?;

    let key = PrivateKey::from_pkcs8_der(&plaintext)
        .map_err(|e| KeystoreError::Format(format!("sealed content is not a key: {e}")))?;
    if key.public_key().fingerprint() != file.fingerprint {
        return Err(KeystoreError::Format("sealed key does not match stored fingerprint".into()));
    }
    Ok(key)
}
