//! Leaky-bucket rate limiting (queue variant).
//!
//! The bucket holds `level` request units and drains at `rate` units per
//! second; a request that would overflow `capacity` is granted at the first
//! instant the bucket has drained enough room. [`LeakyBucket`] is the pure
//! state machine driven by explicit timestamps; [`RateLimiter`] wraps it in
//! a mutex behind a [`Clock`] so timing behaviour is testable without
//! sleeping.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BucketError {
    #[error("invalid limiter config: {0}")]
    Config(String),
}

/// Pure leaky-bucket state. All times are seconds on a monotonic axis.
#[derive(Debug, Clone)]
pub struct LeakyBucket {
    capacity: f64,
    rate: f64,
    level: f64,
    /// Virtual instant at which `level` was last observed; runs ahead of the
    /// caller's clock while grants are queued.
    stamp: f64,
}

impl LeakyBucket {
    /// `capacity` is the burst size B (requests), `rate` the drain rate r in
    /// requests per second.
    pub fn new(capacity: f64, rate: f64) -> Result<Self, BucketError> {
        if !(capacity >= 1.0) {
            return Err(BucketError::Config(format!(
                "burst capacity must be >= 1, got {capacity}"
            )));
        }
        if !(rate > 0.0) {
            return Err(BucketError::Config(format!(
                "drain rate must be > 0, got {rate}"
            )));
        }
        Ok(Self {
            capacity,
            rate,
            level: 0.0,
            stamp: 0.0,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Level after draining up to time `t` (seconds).
    pub fn level_at(&self, t: f64) -> f64 {
        (self.level - (t - self.stamp).max(0.0) * self.rate).max(0.0)
    }

    /// Book one request arriving at `now`; returns how long the caller must
    /// wait before dispatching. Grants are handed out in call order and the
    /// granted instants are nondecreasing.
    pub fn acquire_at(&mut self, now: Duration) -> Duration {
        let now = now.as_secs_f64();
        // Drain relative to the later of the caller's clock and our own
        // virtual stamp (earlier grants may already be booked ahead).
        let t = now.max(self.stamp);
        self.level = self.level_at(t);
        let wait_from_t = if self.level + 1.0 <= self.capacity {
            0.0
        } else {
            (self.level + 1.0 - self.capacity) / self.rate
        };
        let granted = t + wait_from_t;
        self.level = (self.level - wait_from_t * self.rate).max(0.0) + 1.0;
        self.stamp = granted;
        Duration::from_secs_f64((granted - now).max(0.0))
    }
}

/// Time source for the limiter. `sleep` blocks until the clock has advanced
/// by `duration`.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

/// Wall-clock time from a fixed origin.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        if duration > Duration::ZERO {
            std::thread::sleep(duration);
        }
    }
}

/// Deterministic clock for tests and simulations; `sleep` advances it.
#[derive(Default)]
pub struct SimClock {
    now: Mutex<Duration>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, duration: Duration) {
        *self.now.lock().unwrap() += duration;
    }

    pub fn set(&self, now: Duration) {
        *self.now.lock().unwrap() = now;
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}

/// Shared gate in front of a request source. Safe for concurrent `acquire`
/// calls; permits are booked under a single lock so grants are strictly
/// serialized, then each caller sleeps out its own wait.
pub struct RateLimiter {
    bucket: Mutex<LeakyBucket>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(bucket: LeakyBucket, clock: Arc<dyn Clock>) -> Self {
        Self {
            bucket: Mutex::new(bucket),
            clock,
        }
    }

    pub fn with_system_clock(bucket: LeakyBucket) -> Self {
        Self::new(bucket, Arc::new(SystemClock::new()))
    }

    /// Block until a permit is granted; returns the wait that was imposed.
    pub fn acquire(&self) -> Duration {
        let wait = {
            let mut bucket = self.bucket.lock().unwrap();
            bucket.acquire_at(self.clock.now())
        };
        self.clock.sleep(wait);
        wait
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secs(s: f64) -> Duration {
        Duration::from_secs_f64(s)
    }

    #[test]
    fn three_acquires_on_unit_bucket_wait_0_1_2() {
        let mut bucket = LeakyBucket::new(1.0, 1.0).unwrap();
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(0.0));
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(1.0));
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(2.0));
    }

    #[test]
    fn under_capacity_grants_immediately() {
        let mut bucket = LeakyBucket::new(5.0, 1.0).unwrap();
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(0.0));
    }

    #[test]
    fn third_acquire_waits_for_half_rate_drain() {
        let mut bucket = LeakyBucket::new(2.0, 0.5).unwrap();
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(0.0));
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(0.0));
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(2.0));
    }

    #[test]
    fn drained_bucket_recovers() {
        let mut bucket = LeakyBucket::new(1.0, 2.0).unwrap();
        assert_eq!(bucket.acquire_at(secs(0.0)), secs(0.0));
        // after 0.5s one unit has drained
        assert_eq!(bucket.acquire_at(secs(0.5)), secs(0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(LeakyBucket::new(0.5, 1.0).is_err());
        assert!(LeakyBucket::new(1.0, 0.0).is_err());
        assert!(LeakyBucket::new(1.0, -1.0).is_err());
    }

    #[test]
    fn grants_are_monotone_in_request_order() {
        let mut bucket = LeakyBucket::new(3.0, 0.7).unwrap();
        let arrivals = [0.0, 0.1, 0.1, 0.4, 0.4, 0.4, 0.5, 2.0, 2.0, 2.1];
        let mut last_grant = 0.0;
        for &at in &arrivals {
            let wait = bucket.acquire_at(secs(at)).as_secs_f64();
            let grant = at + wait;
            assert!(grant >= last_grant - 1e-12);
            last_grant = grant;
        }
    }

    #[test]
    fn rate_limit_law_on_random_schedules() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let capacity = rng.random_range(1..=5) as f64;
            let rate = rng.random_range(0.2..4.0);
            let mut bucket = LeakyBucket::new(capacity, rate).unwrap();
            let mut t = 0.0;
            let mut grants = Vec::new();
            for _ in 0..200 {
                t += rng.random_range(0.0..0.6);
                let wait = bucket.acquire_at(secs(t)).as_secs_f64();
                grants.push(t + wait);
            }
            // over any window of length T, dispatched <= B + r*T
            for (i, &start) in grants.iter().enumerate() {
                for (j, &end) in grants.iter().enumerate().skip(i) {
                    let window = end - start;
                    let dispatched = (j - i + 1) as f64;
                    assert!(
                        dispatched <= capacity + rate * window + 1e-6,
                        "{dispatched} requests in {window}s violates B={capacity} r={rate}"
                    );
                }
            }
        }
    }

    #[test]
    fn limiter_with_sim_clock_serializes_grants() {
        let clock = Arc::new(SimClock::new());
        let limiter = RateLimiter::new(
            LeakyBucket::new(1.0, 2.0).unwrap(),
            clock.clone(),
        );
        let mut total = Duration::ZERO;
        for _ in 0..10 {
            total += limiter.acquire();
        }
        // 9 waits of 0.5s each; the sim clock slept through all of them
        assert!((total.as_secs_f64() - 4.5).abs() < 1e-9);
        assert!((clock.now().as_secs_f64() - 4.5).abs() < 1e-9);
    }
}
