use std::time::Duration;

use super::gateway::{ChatGateway, GatewayConfig, GatewayFailure};
use crate::error::{Error, Result};

/// OpenAI-style chat-completion endpoint. The request body is
/// `{"model", "temperature", "messages": [{"role": "user", "content"}]}` and
/// the reply text is read from `choices[0].message.content`.
pub struct HttpGateway {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

impl HttpGateway {
    /// Reads the credential from the configured environment variable; a
    /// named but unset variable is a configuration error.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable `{var}` holding the API key is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            api_key,
        })
    }
}

impl ChatGateway for HttpGateway {
    fn send(&self, prompt: &str) -> std::result::Result<String, GatewayFailure> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
        .to_string();
        let mut request = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send(body)
            .map_err(|e| GatewayFailure::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayFailure::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayFailure::Auth(format!("HTTP {status}"))),
            429 => return Err(GatewayFailure::RateLimited(format!("HTTP {status}"))),
            500..=599 | 408 => return Err(GatewayFailure::Transport(format!("HTTP {status}"))),
            _ => return Err(GatewayFailure::Fatal(format!("HTTP {status}: {text}"))),
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| GatewayFailure::Fatal(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| GatewayFailure::Fatal("response lacks choices[0].message.content".into()))
    }

    fn describe(&self) -> String {
        self.model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves the given `(status, body)` pairs, one per connection, and
    /// returns the request bodies it saw.
    fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = lower.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                seen.push(format!("{auth}|{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    fn gateway(endpoint: String, key_env: Option<&str>) -> HttpGateway {
        HttpGateway::from_config(&GatewayConfig {
            endpoint,
            model: "test-model".into(),
            timeout_ms: 5_000,
            api_key_env: key_env.map(str::to_string),
            ..GatewayConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn parses_content_and_sends_wire_format() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"{\"score\": 4}"}}]}"#;
        let (endpoint, handle) = serve(vec![(200, ok.into())]);
        std::env::set_var("DIALEVAL_TEST_HTTP_KEY", "sk-test");
        let gw = gateway(endpoint, Some("DIALEVAL_TEST_HTTP_KEY"));
        assert_eq!(gw.send("hello").unwrap(), "{\"score\": 4}");
        let seen = handle.join().unwrap();
        let (auth, body) = seen[0].split_once('|').unwrap();
        assert_eq!(auth, "authorization: bearer sk-test");
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["model"], "test-model");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][0]["content"], "hello");
    }

    #[test]
    fn status_codes_map_to_failures() {
        let (endpoint, handle) = serve(vec![
            (401, "{}".into()),
            (429, "{}".into()),
            (503, "{}".into()),
        ]);
        let gw = gateway(endpoint, None);
        assert!(matches!(gw.send("a"), Err(GatewayFailure::Auth(_))));
        assert!(matches!(gw.send("b"), Err(GatewayFailure::RateLimited(_))));
        assert!(matches!(gw.send("c"), Err(GatewayFailure::Transport(_))));
        handle.join().unwrap();
    }

    #[test]
    fn unset_key_variable_is_config_error() {
        let cfg = GatewayConfig {
            api_key_env: Some("DIALEVAL_TEST_SURELY_UNSET".into()),
            ..GatewayConfig::default()
        };
        assert!(matches!(HttpGateway::from_config(&cfg), Err(Error::Config(_))));
    }
}
