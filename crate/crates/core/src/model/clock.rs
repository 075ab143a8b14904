use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{MachineName, ModelError};

/// Outcome of comparing two vector clocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClockOrdering {
    Equal,
    Before,
    After,
    Concurrent,
}

/// Per-machine counters. Zero counters are never stored, so two clocks are
/// equal exactly when their maps are equal.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct VectorClock {
    counters: BTreeMap<MachineName, u64>,
}

impl VectorClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, machine: &MachineName) -> u64 {
        self.counters.get(machine).copied().unwrap_or(0)
    }

    /// Sets a counter; a value of zero removes the entry.
    pub fn set(&mut self, machine: MachineName, value: u64) {
        if value == 0 {
            self.counters.remove(&machine);
        } else {
            self.counters.insert(machine, value);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MachineName, u64)> {
        self.counters.iter().map(|(k, v)| (k, *v))
    }

    /// Sum of all counters. Strictly increases along the happened-before order.
    pub fn weight(&self) -> u64 {
        self.counters.values().sum()
    }

    /// Returns a copy with `who`'s counter bumped by one.
    pub fn incremented(&self, who: &MachineName) -> VectorClock {
        let mut next = self.clone();
        next.set(who.clone(), self.get(who) + 1);
        next
    }

    /// Component-wise maximum.
    pub fn merged(&self, other: &VectorClock) -> VectorClock {
        let mut next = self.clone();
        for (m, v) in other.iter() {
            if v > next.get(m) {
                next.set(m.clone(), v);
            }
        }
        next
    }

    pub fn compare(&self, other: &VectorClock) -> ClockOrdering {
        let mut less = false;
        let mut greater = false;
        for machine in self.counters.keys().chain(other.counters.keys()) {
            let (a, b) = (self.get(machine), other.get(machine));
            less |= a < b;
            greater |= a > b;
        }
        match (less, greater) {
            (false, false) => ClockOrdering::Equal,
            (true, false) => ClockOrdering::Before,
            (false, true) => ClockOrdering::After,
            (true, true) => ClockOrdering::Concurrent,
        }
    }

    /// Serialized form: `(NameCounter,NameCounter)` with names sorted.
    pub fn serialize_text(&self) -> String {
        let pairs: Vec<String> = self
            .counters
            .iter()
            .map(|(m, v)| format!("{m}{v}"))
            .collect();
        format!("({})", pairs.join(","))
    }

    pub fn parse_text(text: &str) -> Result<Self, ModelError> {
        let err = || ModelError::InvalidClock(text.to_string());
        let inner = text
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(err)?;
        let mut clock = VectorClock::new();
        if inner.trim().is_empty() {
            return Ok(clock);
        }
        for pair in inner.split(',') {
            let pair = pair.trim();
            let split = pair
                .bytes()
                .position(|b| b.is_ascii_digit())
                .ok_or_else(err)?;
            let (name, digits) = pair.split_at(split);
            let name = MachineName::parse_lenient(name).map_err(|_| err())?;
            let value: u64 = digits.parse().map_err(|_| err())?;
            if value == 0 || clock.counters.contains_key(&name) {
                return Err(err());
            }
            clock.counters.insert(name, value);
        }
        Ok(clock)
    }
}

/// Free-function form of [`VectorClock::compare`].
pub fn compare_clocks(a: &VectorClock, b: &VectorClock) -> ClockOrdering {
    a.compare(b)
}

/// Free-function form of [`VectorClock::incremented`].
pub fn increment_clock(clock: &VectorClock, who: &MachineName) -> VectorClock {
    clock.incremented(who)
}

impl fmt::Display for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize_text())
    }
}

impl fmt::Debug for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorClock{}", self.serialize_text())
    }
}

impl FromStr for VectorClock {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_text(s)
    }
}

impl Serialize for VectorClock {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.serialize_text())
    }
}

impl<'de> Deserialize<'de> for VectorClock {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        VectorClock::parse_text(&s).map_err(serde::de::Error::custom)
    }
}
