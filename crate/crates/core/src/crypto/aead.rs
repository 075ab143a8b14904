use aes_gcm::aead::generic_array::GenericArray;
use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Aes256Gcm};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{CryptoError, MasterKey};

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Authenticated cipher parameters. Framing is `nonce || ciphertext || tag`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherSpec {
    pub algorithm: String,
    pub nonce_length: usize,
    pub tag_length: usize,
}

impl Default for CipherSpec {
    fn default() -> Self {
        Self::aes_128_gcm()
    }
}

impl CipherSpec {
    pub fn aes_128_gcm() -> Self {
        Self {
            algorithm: "AES-128-GCM".into(),
            nonce_length: NONCE_LEN,
            tag_length: TAG_LEN,
        }
    }

    pub fn aes_256_gcm() -> Self {
        Self {
            algorithm: "AES-256-GCM".into(),
            ..Self::aes_128_gcm()
        }
    }

    fn check(&self) -> Result<(), CryptoError> {
        let known = matches!(self.algorithm.as_str(), "AES-128-GCM" | "AES-256-GCM");
        if !known || self.nonce_length != NONCE_LEN || self.tag_length != TAG_LEN {
            return Err(CryptoError::UnsupportedCipher(self.algorithm.clone()));
        }
        Ok(())
    }
}

enum Cipher {
    Aes128(Box<Aes128Gcm>),
    Aes256(Box<Aes256Gcm>),
}

impl Cipher {
    // AES-128 keys with the first 16 bytes of the master key.
    fn new(key: &MasterKey, spec: &CipherSpec) -> Result<Self, CryptoError> {
        spec.check()?;
        let bytes = key.key_bytes();
        Ok(match spec.algorithm.as_str() {
            "AES-128-GCM" => Cipher::Aes128(Box::new(Aes128Gcm::new(GenericArray::from_slice(&bytes[..16])))),
            _ => Cipher::Aes256(Box::new(Aes256Gcm::new(GenericArray::from_slice(&bytes[..])))),
        })
    }
}

/// Encrypts with a fresh random nonce.
pub fn seal(plaintext: &[u8], key: &MasterKey, spec: &CipherSpec) -> Result<Vec<u8>, CryptoError> {
    let cipher = Cipher::new(key, spec)?;
    let mut nonce = [0u8; NONCE_LEN];
    rand::thread_rng().fill_bytes(&mut nonce);
    let nonce_ga = GenericArray::from_slice(&nonce);
    let body = match &cipher {
        Cipher::Aes128(c) => c.encrypt(nonce_ga, plaintext),
        Cipher::Aes256(c) => c.encrypt(nonce_ga, plaintext),
    }
    .map_err(|_| CryptoError::AuthenticationFailure)?;
    let mut out = Vec::with_capacity(NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decrypts and verifies. Wrong key and tampering both surface as
/// [`CryptoError::AuthenticationFailure`].
pub fn open(ciphertext: &[u8], key: &MasterKey, spec: &CipherSpec) -> Result<Vec<u8>, CryptoError> {
    let cipher = Cipher::new(key, spec)?;
    if ciphertext.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::TruncatedCiphertext(ciphertext.len()));
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    let nonce = GenericArray::from_slice(nonce);
    match &cipher {
        Cipher::Aes128(c) => c.decrypt(nonce, body),
        Cipher::Aes256(c) => c.decrypt(nonce, body),
    }
    .map_err(|_| CryptoError::AuthenticationFailure)
}
