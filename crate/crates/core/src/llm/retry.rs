//! Exponential-backoff retry for transient backend failures.

use std::time::Duration;

use rand::Rng;

use crate::error::{Error, Result};

/// Backoff schedule. Only transport errors marked retryable (timeouts,
/// rate limits, 5xx) are retried; protocol and configuration errors
/// surface immediately.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Fractional jitter; each delay is scaled by a uniform draw from
    /// [1 - jitter, 1 + jitter].
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 1_000,
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// No retries at all; useful for tests and offline cache replay.
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            base_delay_ms: 0,
            factor: 1.0,
            jitter: 0.0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let base = self.base_delay_ms as f64 * self.factor.powi(attempt as i32 - 1);
        let scale = if self.jitter > 0.0 {
            rand::thread_rng().gen_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        Duration::from_millis((base * scale).round().max(0.0) as u64)
    }

    /// Runs `op`, retrying retryable transport failures with backoff until
    /// the attempt budget runs out.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.max_attempts.max(1);
        for attempt in 1..=attempts {
            match op() {
                Ok(value) => return Ok(value),
                Err(Error::Transport { message, retryable: true }) => {
                    if attempt == attempts {
                        return Err(Error::Transport {
                            message: format!("{attempts} attempts exhausted: {message}"),
                            retryable: true,
                        });
                    }
                    std::thread::sleep(self.delay(attempt));
                }
                Err(other) => return Err(other),
            }
        }
        unreachable!("loop always returns");
    }
}
