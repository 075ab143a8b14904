use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::{Digest, Sha1};

use super::ModelError;

/// 20-byte SHA-1 digest. Text form is 40 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sha1Digest([u8; 20]);

impl Sha1Digest {
    pub const LEN: usize = 20;

    pub fn from_bytes(bytes: [u8; 20]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Accepts upper or lower case; rejects anything but exactly 40 hex digits.
    pub fn from_hex(text: &str) -> Result<Self, ModelError> {
        if text.len() != 40 {
            return Err(ModelError::InvalidDigest(text.to_string()));
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(text, &mut out)
            .map_err(|_| ModelError::InvalidDigest(text.to_string()))?;
        Ok(Self(out))
    }
}

/// Standard SHA-1 of `data`.
pub fn checksum(data: &[u8]) -> Sha1Digest {
    let mut hasher = Sha1::new();
    hasher.update(data);
    Sha1Digest(hasher.finalize().into())
}

impl fmt::Display for Sha1Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Sha1Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sha1Digest({})", self.to_hex())
    }
}

impl FromStr for Sha1Digest {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for Sha1Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Sha1Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Sha1Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_vectors() {
        assert_eq!(
            checksum(b"").to_hex(),
            "da39a3ee5e6b4b0d3255bfef95601890afd80709"
        );
        assert_eq!(
            checksum(b"abc").to_hex(),
            "a9993e364706816aba3e25717850c26c9cd0d89d"
        );
    }

    #[test]
    fn rejects_bad_hex() {
        assert!(Sha1Digest::from_hex("abc").is_err());
        assert!(Sha1Digest::from_hex(&"g".repeat(40)).is_err());
        let upper = "DA39A3EE5E6B4B0D3255BFEF95601890AFD80709";
        assert_eq!(
            Sha1Digest::from_hex(upper).unwrap().to_hex(),
            upper.to_lowercase()
        );
    }

    proptest! {
        #[test]
        fn hex_round_trip(bytes in proptest::array::uniform20(any::<u8>())) {
            let d = Sha1Digest::from_bytes(bytes);
            let text = d.to_hex();
            prop_assert_eq!(text.len(), 40);
            prop_assert!(text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)));
            prop_assert_eq!(Sha1Digest::from_hex(&text).unwrap(), d);
        }
    }
}
