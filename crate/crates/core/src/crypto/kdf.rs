use std::fmt;

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use sha2::Sha256;

use super::CryptoError;

pub const DEFAULT_KDF_ITERATIONS: u32 = 10_000;
pub const MIN_KDF_ITERATIONS: u32 = 1_000;
pub const DEFAULT_SALT_LEN: usize = 16;
pub const MASTER_KEY_LEN: usize = 32;

/// Password-derived repository key plus the public salt it was derived with.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    key: [u8; MASTER_KEY_LEN],
    salt: Vec<u8>,
}

impl MasterKey {
    /// Rebuilds a key from stored material (config.xml keeps both in hex).
    pub fn from_parts(key: [u8; MASTER_KEY_LEN], salt: Vec<u8>) -> Result<Self, CryptoError> {
        if salt.is_empty() {
            return Err(CryptoError::EmptySalt);
        }
        Ok(Self { key, salt })
    }

    pub fn key_bytes(&self) -> &[u8; MASTER_KEY_LEN] {
        &self.key
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }
}

// Never print key material.
impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKey")
            .field("key", &"<redacted>")
            .field("salt", &hex::encode(&self.salt))
            .finish()
    }
}

pub fn random_salt() -> Vec<u8> {
    let mut salt = vec![0u8; DEFAULT_SALT_LEN];
    rand::thread_rng().fill_bytes(&mut salt);
    salt
}

/// PBKDF2-HMAC-SHA256 over `password` and `salt`, 32-byte output.
pub fn derive_master_key(password: &str, salt: &[u8], iterations: u32) -> Result<MasterKey, CryptoError> {
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    if iterations < MIN_KDF_ITERATIONS {
        return Err(CryptoError::TooFewIterations(iterations));
    }
    if salt.is_empty() {
        return Err(CryptoError::EmptySalt);
    }
    let mut key = [0u8; MASTER_KEY_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut key);
    Ok(MasterKey {
        key,
        salt: salt.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let salt = [9u8; 16];
        let a = derive_master_key("correct horse", &salt, 10_000).unwrap();
        let b = derive_master_key("correct horse", &salt, 10_000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.salt(), &salt);
    }

    #[test]
    fn distinct_salts() {
        let a = derive_master_key("pw", &[1u8; 16], 1_000).unwrap();
        let b = derive_master_key("pw", &[2u8; 16], 1_000).unwrap();
        assert_ne!(a.key_bytes(), b.key_bytes());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(derive_master_key("", &[1], 10_000), Err(CryptoError::EmptyPassword));
        assert_eq!(
            derive_master_key("pw", &[1], 999),
            Err(CryptoError::TooFewIterations(999))
        );
        assert_eq!(derive_master_key("pw", &[], 10_000), Err(CryptoError::EmptySalt));
    }

    #[test]
    fn debug_redacts_key() {
        let k = derive_master_key("pw", &[1u8; 16], 1_000).unwrap();
        let printed = format!("{k:?}");
        assert!(printed.contains("redacted"));
        assert!(!printed.contains(&hex::encode(k.key_bytes())));
    }
}
