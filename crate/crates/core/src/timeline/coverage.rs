//! Recall of a timeline against the actions a scenario actually performed.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::order::Timeline;
use super::{EventType, ForensicEvent, Source};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedAction {
    pub when: DateTime<Utc>,
    /// Machine name expected on the matching event.
    pub actor: Option<String>,
    pub action: EventType,
    /// Path relative to the sync folder.
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Script {
    pub format_version: u32,
    pub actions: Vec<ScriptedAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRef {
    pub source: Source,
    pub origin: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCoverage {
    pub action: ScriptedAction,
    pub matched_by: Option<EventRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub tolerance_secs: f64,
    pub total: usize,
    pub matched: usize,
    /// 1.0 for an empty script.
    pub recall: f64,
    pub actions: Vec<ActionCoverage>,
    pub missing: Vec<ScriptedAction>,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.matched == self.total
    }
}

fn path_matches(event: Option<&str>, wanted: &str) -> bool {
    let Some(p) = event else { return false };
    let p = p.trim_end_matches('/');
    let wanted = wanted.trim_end_matches('/');
    p == wanted || p.ends_with(&format!("/{wanted}"))
}

fn matches(e: &ForensicEvent, a: &ScriptedAction, tolerance_ms: i64) -> bool {
    e.event_type == Some(a.action)
        && a.path.as_deref().is_none_or(|p| path_matches(e.path.as_deref(), p))
        && a.actor.as_deref().is_none_or(|m| e.actor_machine.as_deref() == Some(m))
        && e.time_utc.is_some_and(|t| (t - a.when).num_milliseconds().abs() <= tolerance_ms)
}

pub fn diff_ground_truth(timeline: &Timeline, script: &Script, tolerance_secs: f64) -> CoverageReport {
    let tolerance_ms = (tolerance_secs * 1000.0).round() as i64;
    let actions: Vec<ActionCoverage> = script
        .actions
        .iter()
        .map(|a| ActionCoverage {
            action: a.clone(),
            matched_by: timeline.dated.iter().find(|e| matches(e, a, tolerance_ms)).map(|e| EventRef {
                source: e.source,
                origin: e.origin.clone(),
                seq: e.seq,
            }),
        })
        .collect();
    let matched = actions.iter().filter(|c| c.matched_by.is_some()).count();
    let total = actions.len();
    CoverageReport {
        tolerance_secs,
        total,
        matched,
        recall: if total == 0 { 1.0 } else { matched as f64 / total as f64 },
        missing: actions.iter().filter(|c| c.matched_by.is_none()).map(|c| c.action.clone()).collect(),
        actions,
    }
}
