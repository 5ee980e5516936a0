use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::service::ServiceError;

/// Retry with exponential backoff: the k-th retry waits `base_delay * 2^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or the
    /// attempt budget is spent. `op` receives the 1-based attempt number.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let attempts = self.attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::debug!("attempt {attempt}/{attempts} failed: {e}");
                    thread::sleep(self.delay_before_retry(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 0,
        }
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before_retry(1), Duration::from_millis(500));
        assert_eq!(p.delay_before_retry(2), Duration::from_millis(1000));
        assert_eq!(p.delay_before_retry(3), Duration::from_millis(2000));
    }

    #[test]
    fn transport_errors_use_three_attempts() {
        let mut calls = 0;
        let r: Result<(), _> = fast().run(|_| {
            calls += 1;
            Err(ServiceError::Transport("down".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 3);
    }

    #[test]
    fn rejection_is_not_retried() {
        let mut calls = 0;
        let r: Result<(), _> = fast().run(|_| {
            calls += 1;
            Err(ServiceError::Rejected {
                status: 422,
                reason: "nsfw".into(),
            })
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let r = fast().run(|attempt| {
            if attempt < 2 {
                Err(ServiceError::Transport("blip".into()))
            } else {
                Ok(attempt)
            }
        });
        assert_eq!(r, Ok(2));
    }
}
