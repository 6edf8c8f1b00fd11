use std::sync::OnceLock;

use keyauth_core::crypto::{fingerprint_pem, generate_keypair, KeyPair, PublicKey, Signature};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

const TEST_KEY_PEM: &str = include_str!("data/test_key_pub.pem");
const TEST_KEY_DER: &[u8] = include_bytes!("data/test_key_pub.der");
// SHA-256 of test_key_pub.der, computed with `openssl pkey -outform DER | sha256sum`
// and Python's hashlib, then base64url-encoded without padding.
const TEST_KEY_FINGERPRINT: &str = "Hd_CD5ot9tM9gL5vP-MkJ2RVjTSnFXUvGQraN5EcWYQ";

fn pairs() -> &'static [KeyPair; 2] {
    static PAIRS: OnceLock<[KeyPair; 2]> = OnceLock::new();
    PAIRS.get_or_init(|| [generate_keypair(2048).unwrap(), generate_keypair(2048).unwrap()])
}

#[test]
fn committed_key_fingerprint_matches_independent_digest() {
    assert_eq!(fingerprint_pem(TEST_KEY_PEM).unwrap().to_string(), TEST_KEY_FINGERPRINT);
}

#[test]
fn pem_and_der_give_the_same_fingerprint() {
    let from_pem = PublicKey::from_pem(TEST_KEY_PEM).unwrap();
    let from_der = PublicKey::from_der(TEST_KEY_DER).unwrap();
    assert_eq!(from_pem.fingerprint(), from_der.fingerprint());
    assert_eq!(from_pem.to_der(), TEST_KEY_DER);
}

#[test]
fn fingerprint_is_43_base64url_chars() {
    let fp = pairs()[0].public_key().fingerprint().to_string();
    assert_eq!(fp.len(), 43);
    assert!(fp.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_'));
}

#[test]
fn sign_verify_hundred_random_messages() {
    let pair = &pairs()[0];
    let mut runner = proptest::test_runner::TestRunner::default();
    for _ in 0..100 {
        let msg = proptest::collection::vec(any::<u8>(), 1..512)
            .new_tree(&mut runner)
            .unwrap()
            .current();
        let sig = pair.private_key().sign(&msg).unwrap();
        assert!(pair.public_key().verify(&msg, &sig));
    }
}

#[test]
fn signature_length_for_3072_bit_key() {
    let pair = generate_keypair(3072).unwrap();
    assert_eq!(pair.private_key().sign(b"x").unwrap().len(), 384);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn only_the_authentic_triple_verifies(
        msg in proptest::collection::vec(any::<u8>(), 1..256),
        flip_at in any::<prop::sample::Index>(),
        bit in 0u8..8,
        which in 0u8..3,
    ) {
        let [pair, other] = pairs();
        let sig = pair.private_key().sign(&msg).unwrap();
        prop_assert!(pair.public_key().verify(&msg, &sig));

        match which {
            0 => prop_assert!(!other.public_key().verify(&msg, &sig)),
            1 => {
                let mut m = msg.clone();
                let i = flip_at.index(m.len());
                m[i] ^= 1 << bit;
                prop_assert!(!pair.public_key().verify(&m, &sig));
            }
            _ => {
                let mut s = sig.clone().into_bytes();
                let i = flip_at.index(s.len());
                s[i] ^= 1 << bit;
                prop_assert!(!pair.public_key().verify(&msg, &Signature::from_bytes(s)));
            }
        }
    }
}
