//! Unpadded base64url (RFC 4648 section 5), the only binary-to-text
//! encoding used on the wire, in signing payloads, tokens and key files.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

pub use base64::DecodeError;

pub fn encode(bytes: impl AsRef<[u8]>) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Strict decode: padding, whitespace, non-alphabet characters and
/// non-zero trailing bits are all rejected.
pub fn decode(text: impl AsRef<[u8]>) -> Result<Vec<u8>, DecodeError> {
    URL_SAFE_NO_PAD.decode(text)
}

/// Serde adapter for variable-length binary fields.
pub mod vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        super::decode(text.as_bytes()).map_err(|e| D::Error::custom(format!("invalid base64url: {e}")))
    }
}

/// Declares a fixed-length binary newtype that travels as unpadded base64url.
macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name([u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub const fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            /// Fresh value from the OpenSSL CSPRNG.
            pub fn random() -> Self {
                let mut bytes = [0u8; $len];
                openssl::rand::rand_bytes(&mut bytes).expect("OpenSSL CSPRNG failure");
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_b64(&self) -> String {
                $crate::b64::encode(self.0)
            }

            pub fn from_b64(text: &str) -> Result<Self, $crate::b64::FixedBytesError> {
                let raw = $crate::b64::decode(text)
                    .map_err(|e| $crate::b64::FixedBytesError::Encoding(e.to_string()))?;
                let bytes: [u8; $len] = raw
                    .try_into()
                    .map_err(|v: Vec<u8>| $crate::b64::FixedBytesError::Length {
                        expected: $len,
                        actual: v.len(),
                    })?;
                Ok(Self(bytes))
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(&self.to_b64())
            }
        }

        impl ::std::fmt::Debug for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_b64())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::b64::FixedBytesError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_b64(s)
            }
        }

        impl ::serde::Serialize for $name {
            fn serialize<S: ::serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_b64())
            }
        }

        impl<'de> ::serde::Deserialize<'de> for $name {
            fn deserialize<D: ::serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <::std::borrow::Cow<'de, str>>::deserialize(d)?;
                Self::from_b64(&text).map_err(<D::Error as ::serde::de::Error>::custom)
            }
        }
    };
}

pub(crate) use fixed_bytes;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixedBytesError {
    #[error("invalid base64url: {0}")]
    Encoding(String),
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
}
