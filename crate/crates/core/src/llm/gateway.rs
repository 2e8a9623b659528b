use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Connection settings for a chat-completion endpoint. The credential is
/// never stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub api_key_env: Option<String>,
    /// Delay before retry `i` (0-based) is `backoff_base_ms * 2^i`.
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            temperature: 0.0,
            api_key_env: Some("DIALEVAL_API_KEY".into()),
            backoff_base_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("gateway timeout must be positive".into()));
        }
        if self.temperature != 0.0 {
            return Err(Error::Config(format!(
                "gateway temperature is fixed at 0, got {}",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(Error::Config("gateway model name is empty".into()));
        }
        Ok(())
    }
}

/// Why a single request failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayFailure {
    /// Connection, timeout or server-side error; retried.
    Transport(String),
    /// Rate-limit signal; retried.
    RateLimited(String),
    /// Rejected credentials; not retried.
    Auth(String),
    /// Anything else; not retried.
    Fatal(String),
}

impl std::fmt::Display for GatewayFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GatewayFailure::Transport(m) => write!(f, "transport: {m}"),
            GatewayFailure::RateLimited(m) => write!(f, "rate limited: {m}"),
            GatewayFailure::Auth(m) => write!(f, "auth: {m}"),
            GatewayFailure::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

/// One request, one response body. Implementations must be safe to call
/// from several threads.
pub trait ChatGateway: Send + Sync {
    fn send(&self, prompt: &str) -> std::result::Result<String, GatewayFailure>;

    /// Model identity recorded in run provenance.
    fn describe(&self) -> String;
}

/// Counting semaphore bounding concurrent requests.
pub struct InFlight {
    free: Mutex<usize>,
    released: Condvar,
}

impl InFlight {
    pub fn new(limit: usize) -> Self {
        Self {
            free: Mutex::new(limit.max(1)),
            released: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.released.notify_one();
        out
    }
}

/// A gateway with the retry policy and in-flight bound of its config.
pub struct Client {
    gateway: Box<dyn ChatGateway>,
    cfg: GatewayConfig,
    in_flight: InFlight,
}

impl Client {
    pub fn new(gateway: Box<dyn ChatGateway>, cfg: GatewayConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            in_flight: InFlight::new(cfg.max_in_flight),
            gateway,
            cfg,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn describe(&self) -> String {
        self.gateway.describe()
    }

    /// Sends `prompt`, retrying transport and rate-limit failures up to
    /// `max_retries` times with exponential backoff.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let mut attempts = Vec::new();
        for attempt in 0..=self.cfg.max_retries {
            match self.in_flight.run(|| self.gateway.send(prompt)) {
                Ok(body) => return Ok(body),
                Err(GatewayFailure::Auth(m)) => {
                    return Err(Error::Config(format!("gateway rejected credentials: {m}")))
                }
                Err(f @ GatewayFailure::Fatal(_)) => {
                    attempts.push(format!("attempt {}: {f}", attempt + 1));
                    return Err(Error::Gateway { attempts });
                }
                Err(f) => {
                    attempts.push(format!("attempt {}: {f}", attempt + 1));
                    if attempt < self.cfg.max_retries && self.cfg.backoff_base_ms > 0 {
                        let delay = self.cfg.backoff_base_ms.saturating_mul(1 << attempt.min(16));
                        log::debug!("retrying in {delay} ms after {f}");
                        thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(Error::Gateway { attempts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Flaky {
        fail_first: usize,
        calls: Arc<AtomicUsize>,
        failure: GatewayFailure,
    }

    impl ChatGateway for Flaky {
        fn send(&self, _: &str) -> std::result::Result<String, GatewayFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(self.failure.clone())
            } else {
                Ok("fine".into())
            }
        }

        fn describe(&self) -> String {
            "flaky".into()
        }
    }

    fn client(fail_first: usize, failure: GatewayFailure, max_retries: u32) -> (Client, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let cfg = GatewayConfig {
            max_retries,
            backoff_base_ms: 0,
            ..GatewayConfig::default()
        };
        let gw = Flaky {
            fail_first,
            calls: calls.clone(),
            failure,
        };
        (Client::new(Box::new(gw), cfg).unwrap(), calls)
    }

    #[test]
    fn succeeds_after_retries() {
        let (c, calls) = client(2, GatewayFailure::Transport("reset".into()), 3);
        assert_eq!(c.complete("p").unwrap(), "fine");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_carry_attempt_log() {
        let (c, calls) = client(usize::MAX, GatewayFailure::RateLimited("429".into()), 1);
        match c.complete("p") {
            Err(Error::Gateway { attempts }) => assert_eq!(attempts.len(), 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn auth_failure_is_config_error_without_retry() {
        let (c, calls) = client(usize::MAX, GatewayFailure::Auth("401".into()), 5);
        assert!(matches!(c.complete("p"), Err(Error::Config(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn nonzero_temperature_rejected() {
        let cfg = GatewayConfig {
            temperature: 0.7,
            ..GatewayConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
