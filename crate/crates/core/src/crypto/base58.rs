//! Bitcoin-alphabet base58.

use super::CryptoError;

pub const ALPHABET: &str = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

pub fn base58_encode(bytes: &[u8]) -> String {
    bs58::encode(bytes).into_string()
}

pub fn base58_decode(text: &str) -> Result<Vec<u8>, CryptoError> {
    bs58::decode(text).into_vec().map_err(|e| match e {
        bs58::decode::Error::InvalidCharacter { character, index } => {
            CryptoError::InvalidCharacter { character, index }
        }
        other => CryptoError::MalformedLink(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty() {
        assert_eq!(base58_encode(b""), "");
        assert_eq!(base58_decode("").unwrap(), b"");
    }

    #[test]
    fn leading_zeros() {
        assert_eq!(base58_encode(&[0, 0, 1]), "112");
        assert_eq!(base58_decode("112").unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn excluded_characters() {
        for bad in ["0", "O", "I", "l", "abc+"] {
            assert!(matches!(
                base58_decode(bad),
                Err(CryptoError::InvalidCharacter { .. })
            ), "{bad}");
        }
    }
}
