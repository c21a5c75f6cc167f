use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

/// NCBI E-utilities ceiling without an API key.
pub const ANONYMOUS_RATE: f64 = 3.0;
/// Ceiling with an API key.
pub const KEYED_RATE: f64 = 10.0;

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Token bucket shared by every request a client makes.
///
/// Capacity equals the per-second rate, so at most `rate` requests go out in
/// any one-second window after the bucket drains.
pub struct RateLimiter {
    rate: f64,
    bucket: Mutex<Bucket>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Self {
        assert!(rate_per_sec > 0.0, "rate must be positive");
        Self {
            rate: rate_per_sec,
            bucket: Mutex::new(Bucket {
                tokens: rate_per_sec,
                last: Instant::now(),
            }),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Waits until a request may be sent.
    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut bucket = self.bucket.lock().await;
                let now = Instant::now();
                let refill = now.duration_since(bucket.last).as_secs_f64() * self.rate;
                bucket.tokens = (bucket.tokens + refill).min(self.rate);
                bucket.last = now;
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - bucket.tokens) / self.rate)
            };
            tokio::time::sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[tokio::test(start_paused = true)]
    async fn burst_then_paced() {
        let limiter = RateLimiter::new(ANONYMOUS_RATE);
        let start = Instant::now();
        for _ in 0..3 {
            limiter.acquire().await;
        }
        assert!(start.elapsed() < Duration::from_millis(1));
        limiter.acquire().await;
        let e = start.elapsed();
        assert!(
            e >= Duration::from_millis(333) && e < Duration::from_millis(350),
            "{e:?}"
        );
    }

    #[tokio::test(start_paused = true)]
    async fn concurrent_callers_share_the_bucket() {
        let limiter = Arc::new(RateLimiter::new(ANONYMOUS_RATE));
        let start = Instant::now();
        let handles: Vec<_> = (0..9)
            .map(|_| {
                let l = limiter.clone();
                tokio::spawn(async move {
                    l.acquire().await;
                    Instant::now()
                })
            })
            .collect();
        let mut times = Vec::new();
        for h in handles {
            times.push(h.await.unwrap().duration_since(start));
        }
        times.sort();
        // any window of one second holds at most rate + burst requests
        for (i, t) in times.iter().enumerate() {
            let in_window = times[i..]
                .iter()
                .filter(|u| **u < *t + Duration::from_secs(1))
                .count();
            assert!(in_window <= 6, "{times:?}");
        }
        assert!(
            times[8] >= Duration::from_secs(2) - Duration::from_millis(5),
            "{times:?}"
        );
    }
}
