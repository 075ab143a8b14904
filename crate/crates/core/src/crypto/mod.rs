//! Password-derived master keys, authenticated encryption and sync links.

mod aead;
mod base58;
mod kdf;
mod link;

use thiserror::Error;

pub use aead::{open, seal, CipherSpec, NONCE_LEN, TAG_LEN};
pub use base58::{base58_decode, base58_encode, ALPHABET as BASE58_ALPHABET};
pub use kdf::{
    derive_master_key, random_salt, MasterKey, DEFAULT_KDF_ITERATIONS, DEFAULT_SALT_LEN,
    MASTER_KEY_LEN, MIN_KDF_ITERATIONS,
};
pub use link::{
    encode_link, parse_link, ConnectionSettings, StorageKind, SyncLink, LINK_PREFIX,
    PLAINTEXT_SEGMENT,
};

/// Errors never carry key material or passwords.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("salt must not be empty")]
    EmptySalt,
    #[error("KDF iteration count {0} is below the minimum of 1000")]
    TooFewIterations(u32),
    #[error("authentication failed (wrong password or tampered data)")]
    AuthenticationFailure,
    #[error("ciphertext of {0} bytes is shorter than nonce plus tag")]
    TruncatedCiphertext(usize),
    #[error("unsupported cipher {0:?}")]
    UnsupportedCipher(String),
    #[error("invalid base58 character {character:?} at index {index}")]
    InvalidCharacter { character: char, index: usize },
    #[error("malformed sync link: {0}")]
    MalformedLink(String),
}
