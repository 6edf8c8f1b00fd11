use std::fs;
use std::io::Write;
use std::path::Path;

use keyauth_core::crypto::{generate_keypair, CryptoError, KeyPair, PrivateKey};

#[derive(Debug, thiserror::Error)]
pub enum ServerKeyError {
    #[error("server key I/O at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("server key at {path}: {source}")]
    Key { path: String, source: CryptoError },
}

/// Loads the token-signing key from `path`, generating and saving a new one
/// (owner-readable only) if the file does not exist yet.
pub fn load_or_generate(path: &Path, bits: u32) -> Result<KeyPair, ServerKeyError> {
    let display = path.display().to_string();
    let io_err = |source| ServerKeyError::Io { path: display.clone(), source };
    let key_err = |source| ServerKeyError::Key { path: display.clone(), source };

    match fs::read(path) {
        Ok(pem) => {
            let private = PrivateKey::from_pem(&pem).map_err(key_err)?;
            return KeyPair::from_private(private).map_err(key_err);
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(e)),
    }

    let pair = generate_keypair(bits).map_err(key_err)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&pair.private_key().to_pkcs8_pem()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    match tmp.persist_noclobber(path) {
        Ok(_) => Ok(pair),
        // Lost a race with another process starting on the same path.
        Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => load_or_generate(path, bits),
        Err(e) => Err(io_err(e.error)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_once_then_reloaded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys").join("server-key.pem");
        let first = load_or_generate(&path, 2048).unwrap();
        let second = load_or_generate(&path, 2048).unwrap();
        assert_eq!(first.public_key(), second.public_key());
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o600);
        }
    }

    #[test]
    fn garbage_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("server-key.pem");
        fs::write(&path, "nope").unwrap();
        assert!(matches!(load_or_generate(&path, 2048), Err(ServerKeyError::Key { .. })));
    }
}
