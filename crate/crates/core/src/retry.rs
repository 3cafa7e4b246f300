//! Retry with exponential backoff, an in-flight admission gate, and an
//! order-preserving bounded parallel map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Relative jitter, e.g. 0.2 for +/-20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay_ms: 1000, factor: 2.0, jitter: 0.2 }
    }
}

impl RetryPolicy {
    /// Backoff before retry number `retry` (1-based), jitter applied.
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.base_delay_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        let jitter = if self.jitter > 0.0 { rng.gen_range(-self.jitter..=self.jitter) } else { 0.0 };
        Duration::from_secs_f64((nominal * (1.0 + jitter)).max(0.0) / 1000.0)
    }
}

/// Outcome of one attempt inside [`retry`].
pub enum Attempt<T, E> {
    Done(T),
    /// Transient failure; retried while attempts remain.
    Retry(E),
    /// Permanent failure; returned immediately.
    Fail(E),
}

/// Run `op` until it succeeds, fails permanently, or attempts run out.
/// `op` receives the 1-based attempt number. On success also returns the
/// number of attempts used; on exhaustion returns the last transient error.
pub fn retry<T, E>(policy: &RetryPolicy, mut op: impl FnMut(u32) -> Attempt<T, E>) -> Result<(T, u32), (E, u32)> {
    let mut rng = rand::thread_rng();
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Attempt::Done(v) => return Ok((v, attempt)),
            Attempt::Fail(e) => return Err((e, attempt)),
            Attempt::Retry(e) => {
                if attempt >= max {
                    return Err((e, attempt));
                }
                let wait = policy.delay(attempt, &mut rng);
                log::debug!("attempt {attempt} failed transiently; retrying in {wait:?}");
                std::thread::sleep(wait);
                attempt += 1;
            }
        }
    }
}

/// Counting semaphore bounding simultaneous in-flight calls.
#[derive(Debug)]
pub struct Admission {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct Permit<'a> {
    gate: &'a Admission,
}

impl Admission {
    pub fn new(limit: usize) -> Self {
        Admission { limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new(), peak: AtomicUsize::new(0) }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::Relaxed);
        Permit { gate: self }
    }

    /// Highest number of simultaneously held permits observed.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

/// Apply `f` to every item on at most `workers` threads. Output order
/// matches input order regardless of completion order.
pub fn bounded_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 4, base_delay_ms: 1, factor: 2.0, jitter: 0.2 }
    }

    #[test]
    fn delays_grow_within_jitter() {
        let p = RetryPolicy::default();
        let mut rng = rand::thread_rng();
        for retry in 1..5 {
            let nominal = 1000.0 * 2f64.powi(retry as i32 - 1);
            let d = p.delay(retry, &mut rng).as_secs_f64() * 1000.0;
            assert!(d >= nominal * 0.8 - 1e-6 && d <= nominal * 1.2 + 1e-6, "{d} vs {nominal}");
        }
    }

    #[test]
    fn retries_until_success() {
        let r: Result<(u32, u32), (&str, u32)> =
            retry(&fast(), |a| if a < 3 { Attempt::Retry("busy") } else { Attempt::Done(a * 10) });
        assert_eq!(r, Ok((30, 3)));
    }

    #[test]
    fn stops_on_permanent_failure_and_exhaustion() {
        let r: Result<((), u32), (&str, u32)> = retry(&fast(), |_| Attempt::Fail("auth"));
        assert_eq!(r, Err(("auth", 1)));
        let r: Result<((), u32), (&str, u32)> = retry(&fast(), |_| Attempt::Retry("503"));
        assert_eq!(r, Err(("503", 4)));
    }

    #[test]
    fn admission_caps_in_flight() {
        let gate = Arc::new(Admission::new(3));
        let items: Vec<usize> = (0..40).collect();
        let out = bounded_map(&items, 10, |&i| {
            let _p = gate.acquire();
            std::thread::sleep(Duration::from_millis(2));
            i * 2
        });
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
        assert!(gate.peak() <= 3 && gate.peak() >= 1);
    }

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let out = bounded_map(&items, 8, |&i| {
            std::thread::sleep(Duration::from_micros((100 - i) * 10));
            i
        });
        assert_eq!(out, items);
        assert!(bounded_map(&Vec::<u8>::new(), 4, |&b| b).is_empty());
    }
}
