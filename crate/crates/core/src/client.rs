//! Rate-limited, retrying locate client.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, Stream, StreamExt};
use tokio::sync::Mutex;
use tokio::time::Instant;
use tracing::debug;

use crate::mac::MacAddress;
use crate::protocol::{
    chunk, decode_response, encode_request, ChunkOutcome, LocateRequest, LocateResponse, Locator,
    TransportError, LOCATE_PATH, MAX_BATCH,
};

pub const ENDPOINT_ENV: &str = "WPS_ENDPOINT";
pub const CLIENT_KEY_HEADER: &str = "x-client-key";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per chunk, including the first.
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_backoff: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    fn backoff(&self, failed_attempts: u32) -> Duration {
        self.base_backoff * 2u32.saturating_pow(failed_attempts.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub endpoint: String,
    pub batch_size: usize,
    /// Requests per second across all clones of the client.
    pub rate_per_sec: f64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Sent as `x-client-key`; the simulator keys its rate limit on it.
    pub client_key: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            batch_size: MAX_BATCH,
            rate_per_sec: 30.0,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            client_key: None,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=MAX_BATCH).contains(&self.batch_size) {
            return Err(format!("batch size must be in 1..={MAX_BATCH}"));
        }
        if !(self.rate_per_sec > 0.0 && self.rate_per_sec.is_finite()) {
            return Err("request rate must be positive".into());
        }
        if self.max_in_flight == 0 || self.retry.max_attempts == 0 {
            return Err("in-flight limit and attempts must be at least 1".into());
        }
        Ok(())
    }
}

/// Picks the endpoint: explicit flag, then `WPS_ENDPOINT`, then the default.
pub fn resolve_endpoint(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| ClientConfig::default().endpoint)
}

/// Sends one locate request somewhere.
pub trait Transport: Send + Sync {
    fn send(&self, request: &LocateRequest) -> impl Future<Output = Result<LocateResponse, TransportError>> + Send;
}

/// JSON over HTTP to a `/v1/locate` endpoint.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    http: reqwest::Client,
    url: String,
    client_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, client_key: Option<String>) -> Self {
        HttpTransport {
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("default HTTP client"),
            url: format!("{}{}", endpoint.trim_end_matches('/'), LOCATE_PATH),
            client_key,
        }
    }
}

impl Transport for HttpTransport {
    async fn send(&self, request: &LocateRequest) -> Result<LocateResponse, TransportError> {
        let mut builder = self
            .http
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(encode_request(request));
        if let Some(key) = &self.client_key {
            builder = builder.header(CLIENT_KEY_HEADER, key);
        }
        let resp = builder.send().await.map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after_secs = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse().ok());
            return Err(TransportError::RateLimited { retry_after_secs });
        }
        let body = resp.bytes().await.map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        let parsed = decode_response(&body)?;
        parsed.check_alignment(request)?;
        Ok(parsed)
    }
}

/// Spaces request starts at least `1 / rate` apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate_per_sec),
            next_slot: Mutex::new(None),
        }
    }

    pub async fn acquire(&self) {
        let slot = {
            let mut next = self.next_slot.lock().await;
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

/// Chunks, paces and retries locate calls over some [`Transport`].
///
/// Clones share the rate limiter.
#[derive(Debug)]
pub struct LocateClient<T> {
    transport: Arc<T>,
    config: ClientConfig,
    limiter: Arc<RateLimiter>,
}

impl<T> Clone for LocateClient<T> {
    fn clone(&self) -> Self {
        LocateClient {
            transport: self.transport.clone(),
            config: self.config.clone(),
            limiter: self.limiter.clone(),
        }
    }
}

impl LocateClient<HttpTransport> {
    pub fn http(config: ClientConfig) -> Result<Self, String> {
        let transport = HttpTransport::new(&config.endpoint, config.client_key.clone());
        LocateClient::new(transport, config)
    }
}

impl<T: Transport> LocateClient<T> {
    pub fn new(transport: T, config: ClientConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(LocateClient {
            transport: Arc::new(transport),
            limiter: Arc::new(RateLimiter::new(config.rate_per_sec)),
            config,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Locates `bssids` in chunks of `batch_size`. Chunks run concurrently up
    /// to `max_in_flight`, so outcomes may arrive out of order.
    pub fn locate(&self, bssids: &[MacAddress]) -> impl Stream<Item = ChunkOutcome> + '_ {
        let chunks = chunk(bssids, self.config.batch_size);
        stream::iter(chunks.into_iter().enumerate())
            .map(move |(index, chunk)| self.run_chunk(index, chunk))
            .buffer_unordered(self.config.max_in_flight)
    }

    async fn run_chunk(&self, index: usize, bssids: Vec<MacAddress>) -> ChunkOutcome {
        let request = match LocateRequest::new(bssids.clone()) {
            Ok(r) => r,
            Err(e) => return ChunkOutcome { index, bssids, attempts: 0, result: Err(e.into()) },
        };
        let policy = &self.config.retry;
        let mut attempts = 0;
        loop {
            self.limiter.acquire().await;
            attempts += 1;
            let result = self.transport.send(&request).await;
            match result {
                Err(e) if e.is_retryable() && attempts < policy.max_attempts => {
                    let wait = match &e {
                        TransportError::RateLimited { retry_after_secs: Some(s) } => Duration::from_secs(*s),
                        _ => policy.backoff(attempts),
                    };
                    debug!(chunk = index, attempts, ?wait, "retrying after {e}");
                    tokio::time::sleep(wait).await;
                }
                result => return ChunkOutcome { index, bssids, attempts, result },
            }
        }
    }
}

impl<T: Transport> Locator for LocateClient<T> {
    async fn locate_all(&self, bssids: Vec<MacAddress>) -> Vec<ChunkOutcome> {
        self.locate(&bssids).collect().await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_millis(250));
        assert_eq!(p.backoff(2), Duration::from_millis(500));
        assert_eq!(p.backoff(3), Duration::from_millis(1000));
    }

    #[test]
    fn config_validation() {
        assert!(ClientConfig::default().validate().is_ok());
        let bad = ClientConfig { batch_size: 101, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ClientConfig { rate_per_sec: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn endpoint_precedence() {
        assert_eq!(resolve_endpoint(Some("http://flag")), "http://flag");
    }
}
