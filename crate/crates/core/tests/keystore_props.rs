use std::sync::OnceLock;

use keyauth_core::b64;
use keyauth_core::crypto::{generate_keypair, PrivateKey};
use keyauth_core::keystore::{
    open_private_key, seal_private_key_with, EncryptedKeyFile, KdfParams, KeystoreError,
};
use proptest::prelude::*;
use serde_json::Value;

const FAST: KdfParams = KdfParams { log_n: 8, r: 8, p: 1 };

fn keys() -> &'static Vec<PrivateKey> {
    static KEYS: OnceLock<Vec<PrivateKey>> = OnceLock::new();
    KEYS.get_or_init(|| (0..3).map(|_| generate_keypair(2048).unwrap().into_private_key()).collect())
}

/// Longest run of `needle` bytes that appears contiguously in `haystack`.
fn longest_shared_run(needle: &[u8], haystack: &[u8]) -> usize {
    let mut best = 0;
    let mut prev = vec![0usize; haystack.len() + 1];
    for &a in needle {
        let mut cur = vec![0usize; haystack.len() + 1];
        for (j, &b) in haystack.iter().enumerate() {
            if a == b {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

#[test]
fn sealed_files_share_no_long_run_with_plaintext() {
    for key in keys() {
        let der = key.to_pkcs8_der();
        let file = seal_private_key_with(key, "passphrase", FAST).unwrap();
        let text = file.to_json();
        assert!(longest_shared_run(&der, text.as_bytes()) < 16);
        // Also scan the decoded ciphertext itself, not only its text form.
        let json: Value = serde_json::from_str(&text).unwrap();
        let ct = b64::decode(json["ciphertext"].as_str().unwrap()).unwrap();
        assert!(longest_shared_run(&der, &ct) < 16);
    }
}

fn flip_field(file: &EncryptedKeyFile, field: &str, index: usize, bit: u8) -> EncryptedKeyFile {
    let mut json: Value = serde_json::from_str(&file.to_json()).unwrap();
    let mut raw = b64::decode(json[field].as_str().unwrap()).unwrap();
    let i = index % raw.len();
    raw[i] ^= 1 << bit;
    json[field] = Value::from(b64::encode(&raw));
    EncryptedKeyFile::from_json(&json.to_string()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_for_random_keys_and_passphrases(k in 0usize..3, pass in "\\PC{1,40}") {
        let key = &keys()[k];
        let file = seal_private_key_with(key, &pass, FAST).unwrap();
        let reread = EncryptedKeyFile::from_json(&file.to_json()).unwrap();
        let opened = open_private_key(&reread, &pass).unwrap();
        prop_assert_eq!(opened.public_key(), key.public_key());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn any_flipped_byte_is_detected(
        field in prop::sample::select(vec!["salt", "aead_nonce", "ciphertext"]),
        index in any::<usize>(),
        bit in 0u8..8,
    ) {
        let file = seal_private_key_with(&keys()[0], "passphrase", FAST).unwrap();
        let tampered = flip_field(&file, field, index, bit);
        prop_assert!(matches!(open_private_key(&tampered, "passphrase"), Err(KeystoreError::BadPassphrase)));
    }
}

#[test]
fn stored_kdf_parameters_are_used_on_open() {
    let key = &keys()[0];
    let cheap = KdfParams { log_n: 9, r: 4, p: 2 };
    let file = seal_private_key_with(key, "pw", cheap).unwrap();
    let reread = EncryptedKeyFile::from_json(&file.to_json()).unwrap();
    assert_eq!(reread.kdf_params(), cheap);
    assert!(open_private_key(&reread, "pw").is_ok());
}
