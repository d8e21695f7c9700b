use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

/// Millisecond time source for sessions.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    /// Called once execution has simulated up to `at_ms`. A virtual clock
    /// jumps forward; wall clocks ignore it.
    fn settle(&self, _at_ms: u64) {}

    /// Let `ms` pass, e.g. to model model latency.
    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(std::time::Duration::from_millis(ms));
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Manually driven clock; never moves on its own.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(start_ms),
        }
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn settle(&self, at_ms: u64) {
        self.now.fetch_max(at_ms, Ordering::SeqCst);
    }

    fn sleep_ms(&self, ms: u64) {
        self.advance(ms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_only_moves_forward() {
        let c = VirtualClock::new(1000);
        c.sleep_ms(250);
        assert_eq!(c.now_ms(), 1250);
        c.settle(1100);
        assert_eq!(c.now_ms(), 1250);
        c.settle(4000);
        assert_eq!(c.now_ms(), 4000);
    }
}
