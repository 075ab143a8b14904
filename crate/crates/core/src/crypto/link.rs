use std::fmt;

use serde::{Deserialize, Serialize};

use super::{base58_decode, base58_encode, open, seal, CipherSpec, CryptoError, MasterKey};

pub const LINK_PREFIX: &str = "syncany://storage/1/";
pub const PLAINTEXT_SEGMENT: &str = "not-encrypted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    Local,
    Webdav,
}

impl StorageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StorageKind::Local => "local",
            StorageKind::Webdav => "webdav",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "local" => Some(StorageKind::Local),
            "webdav" => Some(StorageKind::Webdav),
            _ => None,
        }
    }
}

/// How to reach a repository. This record is what sync links carry.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionSettings {
    #[serde(rename = "type")]
    pub kind: StorageKind,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub username: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
}

impl ConnectionSettings {
    pub fn local(path: impl Into<String>) -> Self {
        Self {
            kind: StorageKind::Local,
            url: path.into(),
            username: None,
            password: None,
        }
    }

    pub fn webdav(url: impl Into<String>, username: Option<String>, password: Option<String>) -> Self {
        Self {
            kind: StorageKind::Webdav,
            url: url.into(),
            username,
            password,
        }
    }
}

impl fmt::Debug for ConnectionSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionSettings")
            .field("kind", &self.kind)
            .field("url", &self.url)
            .field("username", &self.username)
            .field("password", &self.password.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

/// A parsed `syncany://storage/1/...` link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncLink {
    Encrypted {
        master_salt: Vec<u8>,
        encrypted_config: Vec<u8>,
    },
    Plaintext {
        config: ConnectionSettings,
    },
}

impl SyncLink {
    /// Recovers the connection settings. Encrypted links need the master key
    /// derived from the repository password and `master_salt`.
    pub fn settings(&self, key: Option<&MasterKey>) -> Result<ConnectionSettings, CryptoError> {
        match self {
            SyncLink::Plaintext { config } => Ok(config.clone()),
            SyncLink::Encrypted { encrypted_config, .. } => {
                let key = key.ok_or(CryptoError::AuthenticationFailure)?;
                let plain = open(encrypted_config, key, &CipherSpec::default())?;
                serde_json::from_slice(&plain)
                    .map_err(|e| CryptoError::MalformedLink(format!("config record: {e}")))
            }
        }
    }
}

/// Builds a link. With a master key the settings are sealed and the key's
/// salt is embedded; without one the plaintext variant is produced.
pub fn encode_link(settings: &ConnectionSettings, master: Option<&MasterKey>) -> Result<String, CryptoError> {
    let config = serde_json::to_vec(settings).expect("settings serialize");
    Ok(match master {
        None => format!("{LINK_PREFIX}{PLAINTEXT_SEGMENT}/{}", base58_encode(&config)),
        Some(key) => {
            let sealed = seal(&config, key, &CipherSpec::default())?;
            format!(
                "{LINK_PREFIX}{}/{}",
                base58_encode(key.salt()),
                base58_encode(&sealed)
            )
        }
    })
}

pub fn parse_link(text: &str) -> Result<SyncLink, CryptoError> {
    let rest = text
        .trim()
        .strip_prefix(LINK_PREFIX)
        .ok_or_else(|| CryptoError::MalformedLink("missing syncany://storage/1/ prefix".into()))?;
    let segments: Vec<&str> = rest.split('/').collect();
    if segments.len() != 2 || segments.iter().any(|s| s.is_empty()) {
        return Err(CryptoError::MalformedLink(format!(
            "expected 2 path segments after the prefix, found {}",
            segments.iter().filter(|s| !s.is_empty()).count()
        )));
    }
    let bad_b58 = |e: CryptoError| CryptoError::MalformedLink(format!("bad base58: {e}"));
    if segments[0] == PLAINTEXT_SEGMENT {
        let raw = base58_decode(segments[1]).map_err(bad_b58)?;
        let config = serde_json::from_slice(&raw)
            .map_err(|e| CryptoError::MalformedLink(format!("config record: {e}")))?;
        return Ok(SyncLink::Plaintext { config });
    }
    Ok(SyncLink::Encrypted {
        master_salt: base58_decode(segments[0]).map_err(bad_b58)?,
        encrypted_config: base58_decode(segments[1]).map_err(bad_b58)?,
    })
}
