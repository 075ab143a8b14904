//! Folder `config.xml`, user-scope `config.xml`, `daemon.xml` and
//! `daemon.pid`: parsers plus the canonical emitters the engine writes with.

use serde::{Deserialize, Serialize};

use super::xml::{escape, parse_document, Element};
use super::ParseError;

/// Hex key material as stored in `<masterKey>` / `<configEncryptionKey>`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub key: Option<String>,
    pub salt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConnectionRecord {
    #[serde(rename = "type")]
    pub kind: Option<String>,
    pub url: Option<String>,
    pub username: Option<String>,
    /// Sealed under the user-level config key, hex encoded.
    pub password: Option<String>,
}

/// Fields of a sync folder's `.syncany/config.xml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolderConfigRecord {
    pub machine_name: String,
    pub display_name: Option<String>,
    pub master_key: Option<KeyMaterial>,
    pub connection: ConnectionRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UserConfigRecord {
    pub config_encryption_key: Option<KeyMaterial>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaemonFolder {
    pub path: String,
    pub enabled: Option<bool>,
}

fn key_material(el: &Element) -> KeyMaterial {
    KeyMaterial {
        key: el.field("key"),
        salt: el.field("salt"),
    }
}

fn require<'a>(el: &'a Element, name: &str) -> Result<&'a Element, ParseError> {
    el.child(name)
        .ok_or_else(|| ParseError::MissingRequiredTag(name.to_string()))
}

pub fn parse_folder_config(text: &str) -> Result<FolderConfigRecord, ParseError> {
    let root = parse_document(text)?;
    if !root.is("config") {
        return Err(ParseError::MissingRequiredTag("config".into()));
    }
    let machine_name = root
        .field("machineName")
        .ok_or_else(|| ParseError::MissingRequiredTag("machineName".into()))?;
    let conn = require(&root, "connection")?;
    Ok(FolderConfigRecord {
        machine_name,
        display_name: root.field("displayName"),
        master_key: root.child("masterKey").map(key_material),
        connection: ConnectionRecord {
            kind: conn.field("type"),
            url: conn.field("url"),
            username: conn.field("username"),
            password: conn.field("password"),
        },
    })
}

pub fn parse_user_config(text: &str) -> Result<UserConfigRecord, ParseError> {
    let root = parse_document(text)?;
    if !root.is("userConfig") {
        return Err(ParseError::MissingRequiredTag("userConfig".into()));
    }
    Ok(UserConfigRecord {
        config_encryption_key: root.child("configEncryptionKey").map(key_material),
    })
}

pub fn parse_daemon(text: &str) -> Result<Vec<DaemonFolder>, ParseError> {
    let root = parse_document(text)?;
    if !root.is("daemon") {
        return Err(ParseError::MissingRequiredTag("daemon".into()));
    }
    let mut folders = Vec::new();
    let mut found = Vec::new();
    root.find_all("folder", &mut found);
    for folder in found {
        let path = folder
            .field("path")
            .ok_or_else(|| ParseError::MissingRequiredTag("path".into()))?;
        let enabled = match folder.field("enabled") {
            None => None,
            Some(v) => Some(parse_bool(&v).ok_or_else(|| ParseError::InvalidValue {
                line: 0,
                column: "enabled".into(),
                value: v.clone(),
            })?),
        };
        folders.push(DaemonFolder { path, enabled });
    }
    Ok(folders)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

pub fn parse_daemon_pid(text: &str) -> Result<u32, ParseError> {
    text.trim()
        .parse()
        .map_err(|_| ParseError::MalformedPid(text.trim().chars().take(32).collect()))
}

const DECL: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";

fn push_tag(out: &mut String, indent: usize, name: &str, value: &Option<String>) {
    if let Some(v) = value {
        out.push_str(&format!("{}<{name}>{}</{name}>\n", " ".repeat(indent), escape(v)));
    }
}

impl FolderConfigRecord {
    pub fn to_xml(&self) -> String {
        let mut out = String::from(DECL);
        out.push_str("<config>\n");
        push_tag(&mut out, 3, "machineName", &Some(self.machine_name.clone()));
        push_tag(&mut out, 3, "displayName", &self.display_name);
        if let Some(mk) = &self.master_key {
            out.push_str("   <masterKey>\n");
            push_tag(&mut out, 6, "key", &mk.key);
            push_tag(&mut out, 6, "salt", &mk.salt);
            out.push_str("   </masterKey>\n");
        }
        out.push_str("   <connection>\n");
        push_tag(&mut out, 6, "type", &self.connection.kind);
        push_tag(&mut out, 6, "url", &self.connection.url);
        push_tag(&mut out, 6, "username", &self.connection.username);
        push_tag(&mut out, 6, "password", &self.connection.password);
        out.push_str("   </connection>\n</config>\n");
        out
    }
}

impl UserConfigRecord {
    pub fn to_xml(&self) -> String {
        let mut out = String::from(DECL);
        out.push_str("<userConfig>\n");
        if let Some(k) = &self.config_encryption_key {
            out.push_str("   <configEncryptionKey>\n");
            push_tag(&mut out, 6, "key", &k.key);
            push_tag(&mut out, 6, "salt", &k.salt);
            out.push_str("   </configEncryptionKey>\n");
        }
        out.push_str("</userConfig>\n");
        out
    }
}

pub fn daemon_to_xml(folders: &[DaemonFolder]) -> String {
    let mut out = String::from(DECL);
    out.push_str("<daemon>\n   <folders>\n");
    for f in folders {
        out.push_str("      <folder>\n");
        push_tag(&mut out, 9, "path", &Some(f.path.clone()));
        push_tag(&mut out, 9, "enabled", &f.enabled.map(|b| b.to_string()));
        out.push_str("      </folder>\n");
    }
    out.push_str("   </folders>\n</daemon>\n");
    out
}
