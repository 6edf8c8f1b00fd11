//! RSA key pairs, RSASSA-PSS signatures and public-key fingerprints.
//!
//! All primitives come from OpenSSL. Signatures are PSS with SHA-256 for
//! both the message digest and MGF1, and a salt as long as the digest.
//! Nothing in this module touches the filesystem.

use std::fmt;

use openssl::bn::BigNum;
use openssl::error::ErrorStack;
use openssl::hash::{hash, MessageDigest};
use openssl::pkey::{PKey, Private, Public};
use openssl::rsa::{Padding, Rsa};
use openssl::sign::{RsaPssSaltlen, Signer, Verifier};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::b64;

/// Modulus sizes accepted for user and server keys.
pub const ALLOWED_BITS: [u32; 3] = [2048, 3072, 4096];
pub const DEFAULT_BITS: u32 = 3072;
const PUBLIC_EXPONENT: u32 = 65537;

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("unsupported RSA modulus size {0} (allowed: 2048, 3072, 4096)")]
    UnsupportedSize(u32),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("refusing to sign an empty payload")]
    EmptyPayload,
    #[error("crypto provider failure: {0}")]
    Provider(#[from] ErrorStack),
}

b64::fixed_bytes!(
    /// SHA-256 over the DER SubjectPublicKeyInfo of a public key.
    Fingerprint,
    32
);

/// Raw RSA signature octets; always as long as the signer's modulus.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "b64::vec")] Vec<u8>);

impl Signature {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", b64::encode(&self.0))
    }
}

#[derive(Clone)]
pub struct PublicKey {
    pkey: PKey<Public>,
}

impl PublicKey {
    fn from_pkey(pkey: PKey<Public>) -> Result<Self, CryptoError> {
        if pkey.rsa().is_err() {
            return Err(CryptoError::InvalidKey("not an RSA key".into()));
        }
        Ok(Self { pkey })
    }

    /// Parses a PEM `PUBLIC KEY` (SubjectPublicKeyInfo) block.
    pub fn from_pem(pem: &str) -> Result<Self, CryptoError> {
        let pkey = PKey::public_key_from_pem(pem.as_bytes())
            .map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_pkey(pkey)
    }

    /// Parses DER-encoded SubjectPublicKeyInfo.
    pub fn from_der(der: &[u8]) -> Result<Self, CryptoError> {
        let pkey =
            PKey::public_key_from_der(der).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_pkey(pkey)
    }

    pub fn to_pem(&self) -> String {
        let pem = self.pkey.public_key_to_pem().expect("encoding an RSA public key");
        String::from_utf8(pem).expect("PEM is ASCII")
    }

    pub fn to_der(&self) -> Vec<u8> {
        self.pkey.public_key_to_der().expect("encoding an RSA public key")
    }

    pub fn bits(&self) -> u32 {
        self.pkey.bits()
    }

    /// Fails with [`CryptoError::UnsupportedSize`] unless the modulus is one of
    /// [`ALLOWED_BITS`].
    pub fn ensure_allowed_size(&self) -> Result<(), CryptoError> {
        check_bits(self.bits())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(self)
    }

    pub fn verify(&self, payload: &[u8], signature: &Signature) -> bool {
        verify(self, payload, signature)
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.pkey.public_eq(&other.pkey)
    }
}

impl Eq for PublicKey {}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bits())
            .field("fingerprint", &self.fingerprint())
            .finish()
    }
}

#[derive(Clone)]
pub struct PrivateKey {
    pkey: PKey<Private>,
}

impl PrivateKey {
    /// Parses an unencrypted PKCS#8 DER private key.
    pub fn from_pkcs8_der(der: &[u8]) -> Result<Self, CryptoError> {
        let pkey = PKey::private_key_from_pkcs8(der)
            .map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_pkey(pkey)
    }

    /// Parses a PEM `PRIVATE KEY` or `RSA PRIVATE KEY` block.
    pub fn from_pem(pem: &[u8]) -> Result<Self, CryptoError> {
        let pkey =
            PKey::private_key_from_pem(pem).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_pkey(pkey)
    }

    fn from_pkey(pkey: PKey<Private>) -> Result<Self, CryptoError> {
        let rsa = pkey
            .rsa()
            .map_err(|_| CryptoError::InvalidKey("not an RSA key".into()))?;
        if !rsa.check_key().map_err(|e| CryptoError::InvalidKey(e.to_string()))? {
            return Err(CryptoError::InvalidKey("RSA key consistency check failed".into()));
        }
        Ok(Self { pkey })
    }

    pub fn to_pkcs8_der(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(self.pkey.private_key_to_pkcs8().expect("encoding an RSA private key"))
    }

    pub fn to_pkcs8_pem(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(
            self.pkey
                .private_key_to_pem_pkcs8()
                .expect("encoding an RSA private key"),
        )
    }

    pub fn bits(&self) -> u32 {
        self.pkey.bits()
    }

    pub fn public_key(&self) -> PublicKey {
        let der = self.pkey.public_key_to_der().expect("encoding an RSA public key");
        PublicKey::from_der(&der).expect("re-reading our own public key")
    }

    pub fn sign(&self, payload: &[u8]) -> Result<Signature, CryptoError> {
        sign(self, payload)
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("bits", &self.bits())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    public: PublicKey,
    private: PrivateKey,
}

impl KeyPair {
    /// Pairs a private key with a public key, checking that the public key is
    /// the one derived from the private key.
    pub fn new(private: PrivateKey, public: PublicKey) -> Result<Self, CryptoError> {
        check_bits(private.bits())?;
        if private.public_key() != public {
            return Err(CryptoError::InvalidKey(
                "public key does not belong to the private key".into(),
            ));
        }
        Ok(Self { public, private })
    }

    pub fn from_private(private: PrivateKey) -> Result<Self, CryptoError> {
        let public = private.public_key();
        Self::new(private, public)
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn private_key(&self) -> &PrivateKey {
        &self.private
    }

    pub fn into_private_key(self) -> PrivateKey {
        self.private
    }

    pub fn bits(&self) -> u32 {
        self.private.bits()
    }
}

fn check_bits(bits: u32) -> Result<(), CryptoError> {
    if ALLOWED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(CryptoError::UnsupportedSize(bits))
    }
}

/// Generates a fresh RSA key pair with public exponent 65537.
pub fn generate_keypair(bits: u32) -> Result<KeyPair, CryptoError> {
    check_bits(bits)?;
    let exponent = BigNum::from_u32(PUBLIC_EXPONENT)?;
    let rsa = Rsa::generate_with_e(bits, &exponent)?;
    let private = PrivateKey { pkey: PKey::from_rsa(rsa)? };
    KeyPair::from_private(private)
}

fn pss_signer(key: &PKey<Private>) -> Result<Signer<'_>, ErrorStack> {
    let mut signer = Signer::new(MessageDigest::sha256(), key)?;
    signer.set_rsa_padding(Padding::PKCS1_PSS)?;
    signer.set_rsa_mgf1_md(MessageDigest::sha256())?;
    signer.set_rsa_pss_saltlen(RsaPssSaltlen::DIGEST_LENGTH)?;
    Ok(signer)
}

fn pss_verifier(key: &PKey<Public>) -> Result<Verifier<'_>, ErrorStack> {
    let mut verifier = Verifier::new(MessageDigest::sha256(), key)?;
    verifier.set_rsa_padding(Padding::PKCS1_PSS)?;
    verifier.set_rsa_mgf1_md(MessageDigest::sha256())?;
    verifier.set_rsa_pss_saltlen(RsaPssSaltlen::DIGEST_LENGTH)?;
    Ok(verifier)
}

/// RSASSA-PSS / SHA-256 signature over `payload`.
pub fn sign(key: &PrivateKey, payload: &[u8]) -> Result<Signature, CryptoError> {
    if payload.is_empty() {
        return Err(CryptoError::EmptyPayload);
    }
    let signature = pss_signer(&key.pkey)?.sign_oneshot_to_vec(payload)?;
    Ok(Signature(signature))
}

/// Total: any malformed signature (wrong length, garbage, wrong key) is
/// simply `false`.
pub fn verify(key: &PublicKey, payload: &[u8], signature: &Signature) -> bool {
    if signature.len() != key.pkey.size() {
        return false;
    }
    pss_verifier(&key.pkey)
        .and_then(|mut v| v.verify_oneshot(&signature.0, payload))
        .unwrap_or(false)
}

pub fn fingerprint(key: &PublicKey) -> Fingerprint {
    let digest = hash(MessageDigest::sha256(), &key.to_der()).expect("SHA-256");
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    Fingerprint::from_bytes(bytes)
}

/// Fingerprint of a PEM public key, failing on undecodable input.
pub fn fingerprint_pem(pem: &str) -> Result<Fingerprint, CryptoError> {
    Ok(PublicKey::from_pem(pem)?.fingerprint())
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;

    fn pair() -> &'static KeyPair {
        static PAIR: OnceLock<KeyPair> = OnceLock::new();
        PAIR.get_or_init(|| generate_keypair(2048).unwrap())
    }

    #[test]
    fn rejects_unsupported_sizes() {
        for bits in [0, 1024, 2047, 8192] {
            assert!(matches!(generate_keypair(bits), Err(CryptoError::UnsupportedSize(b)) if b == bits));
        }
    }

    #[test]
    fn generated_pair_has_requested_size_and_exponent() {
        let pair = pair();
        assert_eq!(pair.bits(), 2048);
        assert_eq!(pair.public_key().bits(), 2048);
        let rsa = pair.public_key().pkey.rsa().unwrap();
        assert_eq!(rsa.e().to_dec_str().unwrap().to_string(), "65537");
    }

    #[test]
    fn successive_pairs_differ() {
        let other = generate_keypair(2048).unwrap();
        assert_ne!(other.public_key(), pair().public_key());
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let other = generate_keypair(2048).unwrap();
        let err = KeyPair::new(pair().private_key().clone(), other.public_key().clone());
        assert!(matches!(err, Err(CryptoError::InvalidKey(_))));
    }

    #[test]
    fn signature_length_matches_modulus() {
        let sig = pair().private_key().sign(b"hello").unwrap();
        assert_eq!(sig.len(), 256);
    }

    #[test]
    fn empty_payload_is_refused() {
        assert!(matches!(pair().private_key().sign(b""), Err(CryptoError::EmptyPayload)));
    }

    #[test]
    fn verify_is_total_on_garbage() {
        let pk = pair().public_key();
        assert!(!pk.verify(b"m", &Signature::from_bytes(vec![0; 256])));
        assert!(!pk.verify(b"m", &Signature::from_bytes(vec![])));
        assert!(!pk.verify(b"m", &Signature::from_bytes(vec![0xff; 300])));
    }

    #[test]
    fn signatures_are_randomized_but_both_verify() {
        let sk = pair().private_key();
        let a = sk.sign(b"payload").unwrap();
        let b = sk.sign(b"payload").unwrap();
        assert_ne!(a, b);
        assert!(pair().public_key().verify(b"payload", &a));
        assert!(pair().public_key().verify(b"payload", &b));
    }

    #[test]
    fn pkcs1v15_signature_does_not_verify() {
        let mut signer = Signer::new(MessageDigest::sha256(), &pair().private_key().pkey).unwrap();
        signer.set_rsa_padding(Padding::PKCS1).unwrap();
        let sig = signer.sign_oneshot_to_vec(b"payload").unwrap();
        assert!(!pair().public_key().verify(b"payload", &Signature::from_bytes(sig)));
    }

    #[test]
    fn fingerprint_is_stable_across_private_key_encodings() {
        let sk = pair().private_key();
        let from_der = PrivateKey::from_pkcs8_der(&sk.to_pkcs8_der()).unwrap();
        let from_pem = PrivateKey::from_pem(&sk.to_pkcs8_pem()).unwrap();
        let fp = pair().public_key().fingerprint();
        assert_eq!(from_der.public_key().fingerprint(), fp);
        assert_eq!(from_pem.public_key().fingerprint(), fp);
        assert_eq!(fp.to_string().len(), 43);
    }

    #[test]
    fn private_key_debug_hides_material() {
        let text = format!("{:?}", pair().private_key());
        assert!(text.contains("2048"));
        assert!(!text.contains("PRIVATE"));
    }

    #[test]
    fn fingerprint_pem_rejects_garbage() {
        assert!(matches!(fingerprint_pem("not a key"), Err(CryptoError::InvalidKey(_))));
    }
}
