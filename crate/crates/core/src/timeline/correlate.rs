//! Links between identifier spaces: machine names, display names, client IPs
//! and repository URLs.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::bundle::ArtifactBundle;
use crate::parsers::LogKind;

pub const DEFAULT_IP_WINDOW_SECS: i64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    /// Artifact class, e.g. `config.xml` or `access.log`.
    pub artifact: String,
    pub origin: String,
    pub raw: String,
}

/// Both names occur in one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayLink {
    pub machine: String,
    pub display_name: String,
    pub evidence: Vec<Evidence>,
}

/// Time proximity between a local upload and a server request; always
/// inferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpLink {
    pub machine: String,
    pub ip: String,
    pub inferred: bool,
    /// Smallest observed gap between paired records.
    pub min_delta_ms: i64,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoLink {
    pub url: String,
    pub folder: String,
    pub machine: String,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub display_links: Vec<DisplayLink>,
    pub ip_links: Vec<IpLink>,
    pub repo_links: Vec<RepoLink>,
}

impl CorrelationMap {
    pub fn machines_for_ip(&self, ip: &str) -> Vec<&str> {
        self.ip_links.iter().filter(|l| l.ip == ip).map(|l| l.machine.as_str()).collect()
    }
}

fn last_segment(s: &str) -> &str {
    let s = s.split(['?', '#']).next().unwrap_or(s).trim_end_matches('/');
    s.rsplit(['/', '\\']).next().unwrap_or(s)
}

pub fn correlate(bundle: &ArtifactBundle, window_secs: i64) -> CorrelationMap {
    let mut map = CorrelationMap::default();
    for folder in &bundle.sync_folders {
        let Some(config) = &folder.config else { continue };
        let c = &config.records;
        let evidence = || {
            vec![Evidence {
                artifact: "config.xml".into(),
                origin: config.origin.clone(),
                raw: c.to_xml(),
            }]
        };
        if let Some(display) = &c.display_name {
            map.display_links.push(DisplayLink {
                machine: c.machine_name.clone(),
                display_name: display.clone(),
                evidence: evidence(),
            });
        }
        if let Some(url) = &c.connection.url {
            map.repo_links.push(RepoLink {
                url: url.clone(),
                folder: folder.path.clone(),
                machine: c.machine_name.clone(),
                evidence: evidence(),
            });
        }
    }

    struct Upload<'a> {
        machine: &'a str,
        at: DateTime<Utc>,
        object: &'a str,
        evidence: Evidence,
    }
    let mut uploads = Vec::new();
    for folder in &bundle.sync_folders {
        let Some(machine) = folder.machine_name() else { continue };
        for log in &folder.logs {
            for e in log.records.iter().filter(|e| e.kind == LogKind::UploadingFile) {
                let target = e.attrs.get("url").or_else(|| e.attrs.get("path"));
                let Some(target) = target else { continue };
                uploads.push(Upload {
                    machine,
                    at: e.timestamp.with_timezone(&Utc),
                    object: last_segment(target),
                    evidence: Evidence { artifact: "syncany.log".into(), origin: log.origin.clone(), raw: e.raw.clone() },
                });
            }
        }
    }
    let window_ms = window_secs * 1000;
    for log in &bundle.access_logs {
        for req in log.records.iter().filter(|r| r.method == "PUT") {
            let at = req.received_at.with_timezone(&Utc);
            for up in uploads.iter().filter(|u| u.object == last_segment(&req.path)) {
                let delta = (up.at - at).num_milliseconds().abs();
                if delta > window_ms {
                    continue;
                }
                let ev = Evidence { artifact: "access.log".into(), origin: log.origin.clone(), raw: req.to_line() };
                match map.ip_links.iter_mut().find(|l| l.machine == up.machine && l.ip == req.client_ip) {
                    Some(link) => {
                        link.min_delta_ms = link.min_delta_ms.min(delta);
                        for e in [up.evidence.clone(), ev] {
                            if !link.evidence.contains(&e) {
                                link.evidence.push(e);
                            }
                        }
                    }
                    None => map.ip_links.push(IpLink {
                        machine: up.machine.to_string(),
                        ip: req.client_ip.clone(),
                        inferred: true,
                        min_delta_ms: delta,
                        evidence: vec![up.evidence.clone(), ev],
                    }),
                }
            }
        }
    }
    map.display_links.sort_by(|a, b| (&a.machine, &a.display_name).cmp(&(&b.machine, &b.display_name)));
    map.repo_links.sort_by(|a, b| (&a.url, &a.folder).cmp(&(&b.url, &b.folder)));
    map.ip_links.sort_by(|a, b| (&a.machine, &a.ip).cmp(&(&b.machine, &b.ip)));
    for l in &mut map.ip_links {
        l.evidence.sort();
    }
    map
}
