use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};

pub trait TimeSource: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl TimeSource for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Manually driven clock. Every reading advances it by `tick`, so successive
/// readings are strictly increasing when `tick` is positive.
#[derive(Debug)]
pub struct SimClock {
    now: Mutex<DateTime<Utc>>,
    tick: Duration,
}

impl SimClock {
    pub fn new(start: DateTime<Utc>, tick: Duration) -> Self {
        SimClock { now: Mutex::new(start), tick }
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }

    pub fn peek(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }
}

impl TimeSource for SimClock {
    fn now(&self) -> DateTime<Utc> {
        let mut now = self.now.lock().unwrap();
        let t = *now;
        *now += self.tick;
        t
    }
}
