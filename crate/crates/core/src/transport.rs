//! Blocking JSON-over-HTTP with bounded retries, shared by the remote
//! vision-chat and segmentation clients.

use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde::{de::DeserializeOwned, Serialize};

use crate::error::BackendError;

/// Encodes an image as base64 PNG, the form both wire contracts use.
pub fn png_base64_encode(img: &RgbImage) -> String {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).expect("PNG encoding into memory");
    base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
}

/// Decodes a base64 PNG into 8-bit RGB.
pub fn png_base64_decode(data: &str) -> Result<RgbImage, String> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| format!("invalid base64: {e}"))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| format!("invalid PNG: {e}"))?;
    Ok(img.into_rgb8())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Sleep before retry `n` (1-based) is `backoff[n - 1]`, or the last entry.
    pub backoff: Vec<Duration>,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)],
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(attempts: u32, timeout: Duration) -> Self {
        Self { attempts, backoff: Vec::new(), timeout }
    }

    fn delay_before_retry(&self, retry: u32) -> Duration {
        self.backoff
            .get(retry as usize - 1)
            .or(self.backoff.last())
            .copied()
            .unwrap_or(Duration::ZERO)
    }
}

/// Joins an endpoint base URL and a route without doubling slashes.
pub fn join_url(endpoint: &str, route: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), route.trim_start_matches('/'))
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(policy: RetryPolicy) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(policy.timeout)
            .build()
            .expect("HTTP client builds with static configuration");
        Self { client, policy }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// POSTs `body` and decodes the response. Transport failures and 5xx
    /// answers are retried; 4xx answers fail immediately.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, BackendError> {
        let payload = serde_json::to_vec(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let mut last: Option<BackendError> = None;
        for attempt in 1..=self.policy.attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.policy.delay_before_retry(attempt - 1));
            }
            let sent = self
                .client
                .post(url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone())
                .send();
            let resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    let cause = if e.is_timeout() {
                        format!("timeout after {:?}: {e}", self.policy.timeout)
                    } else {
                        e.to_string()
                    };
                    tracing::warn!(url, attempt, %cause, "backend request failed");
                    last = Some(BackendError::Unavailable { attempts: attempt, cause });
                    continue;
                }
            };
            let status = resp.status();
            let bytes = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last = Some(BackendError::Unavailable { attempts: attempt, cause: e.to_string() });
                    continue;
                }
            };
            if status.is_success() {
                return serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol(e.to_string()));
            }
            let err = BackendError::Status {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            };
            if status.is_client_error() {
                return Err(err);
            }
            tracing::warn!(url, attempt, status = status.as_u16(), "backend returned server error");
            last = Some(err);
        }
        Err(match last {
            Some(BackendError::Unavailable { cause, .. }) => {
                BackendError::Unavailable { attempts: self.policy.attempts.max(1), cause }
            }
            Some(other) => other,
            None => BackendError::Unavailable { attempts: 0, cause: "no attempts made".into() },
        })
    }
}
