//! Wall-clock abstraction so the same scheduler and workers run under
//! real time or a discrete-event virtual clock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since an arbitrary epoch (Unix epoch for the system
/// clock, zero for simulated clocks).
pub type Millis = u64;

pub trait Clock: Send + Sync {
    fn now(&self) -> Millis;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Millis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .expect("system clock after 1970")
            .as_millis() as Millis
    }
}

/// Shared virtual clock: time moves only when the driver advances it.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now: Arc<AtomicU64>,
}

impl SimClock {
    pub fn new() -> SimClock {
        SimClock::default()
    }

    pub fn advance_to(&self, t: Millis) {
        // Monotone: never step backwards even if events fire out of order.
        self.now.fetch_max(t, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now(&self) -> Millis {
        self.now.load(Ordering::SeqCst)
    }
}

pub const MINUTE_MS: Millis = 60_000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_is_monotone() {
        let clock = SimClock::new();
        assert_eq!(clock.now(), 0);
        clock.advance_to(500);
        clock.advance_to(200);
        assert_eq!(clock.now(), 500);
    }
}
