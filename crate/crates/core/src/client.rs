//! Client contracts for the external models the pipeline talks to.
//!
//! The toolkit never bundles model weights. Everything that needs a language
//! model, an embedding model, or a safety classifier goes through one of the
//! traits below, so deployments can plug in an HTTP backend while tests run
//! against the deterministic stubs in [`crate::stubs`].
//!
//! Transient failures are retried with exponential backoff (3 retries, 1 s
//! base delay by default); what happens after the budget is exhausted is up to
//! the caller, the helpers here just surface a transport error.

use std::sync::Arc;
use std::time::Duration;

use crate::error::{Error, Result};

/// Sampling parameters for a chat completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// Failure modes a client call can report.
#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// Worth retrying: rate limits, timeouts, 5xx responses.
    #[error("transient client failure: {0}")]
    Transient(String),
    /// Not worth retrying: auth failures, malformed requests.
    #[error("permanent client failure: {0}")]
    Permanent(String),
}

/// Chat-completion contract: (system text, user text, params) → completion.
pub trait ChatClient: Send + Sync {
    /// Stable identity (model name) recorded in provenance metadata.
    fn id(&self) -> &str;

    fn complete(
        &self,
        system: Option<&str>,
        user: &str,
        params: &GenParams,
    ) -> std::result::Result<String, ClientError>;
}

/// Text-embedding contract: text → fixed-length real vector.
pub trait Embedder: Send + Sync {
    /// Stable identity used for cache keying.
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> std::result::Result<Vec<f64>, ClientError>;
}

/// Safety-classifier contract: (question, response) → "safe" | "unsafe".
pub trait SafetyClassifier: Send + Sync {
    fn id(&self) -> &str;

    fn classify(
        &self,
        question: &str,
        response: &str,
    ) -> std::result::Result<String, ClientError>;
}

/// Retry schedule for transient client failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt (so `retries = 3` means 4 attempts).
    pub retries: u32,
    /// Base backoff delay; attempt `n` sleeps `base * 2^n`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// A policy that retries without sleeping; used by tests and stub runs.
    pub fn immediate() -> Self {
        RetryPolicy {
            retries: 3,
            base_delay: Duration::ZERO,
        }
    }

    /// Run `call` under this policy, retrying transient failures.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> std::result::Result<T, ClientError>,
    ) -> Result<T> {
        let mut attempt = 0u32;
        loop {
            match call() {
                Ok(value) => return Ok(value),
                Err(ClientError::Permanent(msg)) => return Err(Error::transport(msg)),
                Err(ClientError::Transient(msg)) => {
                    if attempt >= self.retries {
                        return Err(Error::transport(format!(
                            "{msg} (after {} attempts)",
                            attempt + 1
                        )));
                    }
                    let delay = self.base_delay * 2u32.saturating_pow(attempt);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Complete a chat request, retrying transient failures per `policy`.
pub fn complete_with_retry(
    client: &dyn ChatClient,
    system: Option<&str>,
    user: &str,
    params: &GenParams,
    policy: &RetryPolicy,
) -> Result<String> {
    policy.run(|| client.complete(system, user, params))
}

/// Shared handle type used wherever clients cross thread boundaries.
pub type SharedChat = Arc<dyn ChatClient>;
pub type SharedEmbedder = Arc<dyn Embedder>;
pub type SharedClassifier = Arc<dyn SafetyClassifier>;
