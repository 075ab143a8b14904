use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ForensicEvent;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub dated: Vec<ForensicEvent>,
    /// Records without a time of their own; never interleaved with `dated`.
    pub undated: Vec<ForensicEvent>,
}

impl Timeline {
    pub fn len(&self) -> usize {
        self.dated.len() + self.undated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &ForensicEvent> {
        self.dated.iter().chain(&self.undated)
    }
}

/// Total order: time, source priority, origin, seq, then the full record so
/// that equal keys cannot depend on input order.
fn compare(a: &ForensicEvent, b: &ForensicEvent) -> Ordering {
    a.time_utc
        .cmp(&b.time_utc)
        .then(a.source.cmp(&b.source))
        .then_with(|| a.origin.cmp(&b.origin))
        .then(a.seq.cmp(&b.seq))
        .then_with(|| {
            serde_json::to_string(a)
                .expect("events serialize")
                .cmp(&serde_json::to_string(b).expect("events serialize"))
        })
}

pub fn build_timeline(events: Vec<ForensicEvent>) -> Timeline {
    let (mut dated, mut undated): (Vec<_>, Vec<_>) = events.into_iter().partition(|e| e.time_utc.is_some());
    dated.sort_by(compare);
    undated.sort_by(compare);
    Timeline { dated, undated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{Details, EventType, Source};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn ev(secs: i64, source: Source, seq: u64) -> ForensicEvent {
        ForensicEvent {
            time_utc: (secs >= 0).then(|| Utc.timestamp_opt(secs, 0).unwrap()),
            source,
            event_type: Some(EventType::FileAdded),
            path: None,
            actor_machine: None,
            actor_ip: None,
            details: Details { raw: format!("r{seq}"), attrs: Default::default() },
            origin: "o".into(),
            seq,
        }
    }

    #[test]
    fn priority_at_equal_instant() {
        let t = build_timeline(vec![ev(5, Source::SyncanyLog, 0), ev(5, Source::LocalDb, 9)]);
        assert_eq!(t.dated[0].source, Source::LocalDb);
    }

    #[test]
    fn undated_kept_apart() {
        let t = build_timeline(vec![ev(-1, Source::Carved, 0), ev(5, Source::LocalDb, 0)]);
        assert_eq!(t.dated.len(), 1);
        assert_eq!(t.undated.len(), 1);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            specs in proptest::collection::vec((-1i64..4, 0usize..8, 0u64..3), 0..40),
            seed in any::<u64>(),
        ) {
            let events: Vec<_> = specs.iter().map(|&(t, s, q)| ev(t, Source::ALL[s], q)).collect();
            let mut shuffled = events.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
            prop_assert_eq!(build_timeline(events), build_timeline(shuffled));
        }
    }
}
