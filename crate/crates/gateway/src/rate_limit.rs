//! Per-client token buckets.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::Clock;

const PRUNE_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateDecision {
    Allow,
    /// Denied; a token becomes available after `retry_after`.
    Deny { retry_after: Duration },
}

impl RateDecision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, RateDecision::Allow)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bucket {
    tokens: f64,
    updated: Duration,
}

/// Token bucket of `capacity` tokens refilled at `refill_per_s`, one bucket
/// per client id. Buckets start full.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    refill_per_s: f64,
    clock: Arc<dyn Clock>,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(capacity: u32, refill_per_s: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(capacity >= 1, "bucket capacity must be at least 1");
        assert!(
            refill_per_s.is_finite() && refill_per_s > 0.0,
            "refill rate must be positive"
        );
        Self {
            capacity: capacity as f64,
            refill_per_s,
            clock,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub fn check(&self, client_id: &str) -> RateDecision {
        let now = self.clock.now();
        let mut buckets = self.buckets.lock();
        if buckets.len() > PRUNE_THRESHOLD {
            let (cap, rate) = (self.capacity, self.refill_per_s);
            buckets.retain(|_, b| b.tokens + (now - b.updated).as_secs_f64() * rate < cap);
        }
        let bucket = buckets.entry(client_id.to_owned()).or_insert(Bucket {
            tokens: self.capacity,
            updated: now,
        });
        let elapsed = now.saturating_sub(bucket.updated).as_secs_f64();
        bucket.tokens = (bucket.tokens + elapsed * self.refill_per_s).min(self.capacity);
        bucket.updated = now;
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            RateDecision::Allow
        } else {
            let missing = 1.0 - bucket.tokens;
            RateDecision::Deny {
                retry_after: Duration::from_secs_f64(missing / self.refill_per_s),
            }
        }
    }
}
