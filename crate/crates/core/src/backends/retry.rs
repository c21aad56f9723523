use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded retries with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 500,
        }
    }
}

pub(crate) enum Failure {
    Retryable(String),
    Fatal(String),
}

impl RetryPolicy {
    pub(crate) fn run<T>(&self, mut op: impl FnMut() -> Result<T, Failure>) -> Result<T> {
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(message)) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    log::warn!("attempt {attempt}/{attempts} failed: {message}");
                    last = message;
                    if attempt < attempts {
                        let delay = self
                            .base_delay_ms
                            .saturating_mul(1 << (attempt - 1).min(16));
                        thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gives_up_after_configured_attempts() {
        let policy = RetryPolicy {
            attempts: 3,
            base_delay_ms: 0,
        };
        let mut calls = 0;
        let err = policy
            .run::<()>(|| {
                calls += 1;
                Err(Failure::Retryable("down".into()))
            })
            .unwrap_err();
        assert_eq!(calls, 3);
        assert!(matches!(err, Error::Transport { attempts: 3, .. }));
    }

    #[test]
    fn fatal_stops_immediately_and_success_returns() {
        let policy = RetryPolicy {
            attempts: 3,
            base_delay_ms: 0,
        };
        let err = policy
            .run::<()>(|| Err(Failure::Fatal("400".into())))
            .unwrap_err();
        assert!(matches!(err, Error::Transport { attempts: 1, .. }));
        let mut n = 0;
        let ok = policy
            .run(|| {
                n += 1;
                if n < 2 {
                    Err(Failure::Retryable("blip".into()))
                } else {
                    Ok(n)
                }
            })
            .unwrap();
        assert_eq!(ok, 2);
    }
}
