use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// Random per-repository client identifier.
///
/// Generated names are always 20 ASCII letters. Names read back from evidence
/// are accepted leniently: any non-empty run of ASCII letters, plus `.` which
/// shows up in OCR'd and hand-transcribed exports.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MachineName(String);

impl MachineName {
    pub const GENERATED_LEN: usize = 20;

    /// Strict constructor: exactly 20 ASCII letters.
    pub fn new(name: &str) -> Result<Self, ModelError> {
        if name.len() == Self::GENERATED_LEN && name.bytes().all(|b| b.is_ascii_alphabetic()) {
            Ok(Self(name.to_string()))
        } else {
            Err(ModelError::InvalidMachineName(name.to_string()))
        }
    }

    pub fn parse_lenient(name: &str) -> Result<Self, ModelError> {
        if !name.is_empty() && name.bytes().all(Self::is_name_byte) {
            Ok(Self(name.to_string()))
        } else {
            Err(ModelError::InvalidMachineName(name.to_string()))
        }
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
        let name = (0..Self::GENERATED_LEN)
            .map(|_| LETTERS[rng.gen_range(0..LETTERS.len())] as char)
            .collect();
        Self(name)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn is_name_byte(b: u8) -> bool {
        b.is_ascii_alphabetic() || b == b'.'
    }
}

impl fmt::Display for MachineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for MachineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MachineName({})", self.0)
    }
}

impl Serialize for MachineName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for MachineName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MachineName::parse_lenient(&s).map_err(serde::de::Error::custom)
    }
}
