use std::time::Duration;

use rand::Rng;

use super::GatewayError;

/// Exponential backoff with jitter. Only transient failures are retried.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Outcome of one attempt, as seen by the retry loop.
pub(crate) enum Attempt<T> {
    Done(T),
    Transient(String),
    Fatal(GatewayError),
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`: `base * 2^(attempt-1)` scaled by a
    /// jitter factor in `[0.5, 1.0]`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << (attempt.saturating_sub(1)).min(16));
        exp.mul_f64(rand::rng().random_range(0.5..=1.0))
    }

    pub(crate) fn run<T>(&self, mut op: impl FnMut() -> Attempt<T>) -> Result<T, GatewayError> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts.max(1) {
            match op() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(msg) => {
                    log::debug!("attempt {attempt} failed transiently: {msg}");
                    last = msg;
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.delay(attempt));
                    }
                }
            }
        }
        Err(GatewayError::Transport(format!(
            "retry budget of {} attempts exhausted: {last}",
            self.max_attempts
        )))
    }
}

/// 408, 425, 429 and 5xx are worth another attempt.
pub(crate) fn is_transient_status(status: u16) -> bool {
    matches!(status, 408 | 425 | 429) || (500..600).contains(&status)
}
