//! OpenAI-style HTTP chat-completion transport.
//!
//! Wire format: POST {endpoint} with {"model", "temperature", "messages"}
//! and an optional `Authorization: Bearer` header from the environment
//! variable named in the config; the reply's first choice message content
//! is the completion.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::GatewayError;
use crate::gateway::{BackendConfig, ChatRequest, ChatTransport};

pub struct HttpTransport;

impl ChatTransport for HttpTransport {
    fn send(
        &self,
        config: &BackendConfig,
        request: &ChatRequest<'_>,
    ) -> Result<String, GatewayError> {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let body = json!({
            "model": config.model_name,
            "temperature": config.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });

        let mut call = agent
            .post(&config.endpoint)
            .set("Content-Type", "application/json");
        if let Some(var) = &config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                call = call.set("Authorization", &format!("Bearer {key}"));
            }
        }

        match call.send_string(&body.to_string()) {
            Ok(response) => {
                let text = response
                    .into_string()
                    .map_err(|e| GatewayError::Transport(format!("reading response body: {e}")))?;
                parse_completion(&text)
            }
            Err(ureq::Error::Status(429, _)) => Err(GatewayError::RateLimited),
            Err(ureq::Error::Status(code, response)) => {
                let snippet = response.into_string().unwrap_or_default();
                let snippet: String = snippet.chars().take(200).collect();
                Err(GatewayError::Transport(format!("http {code}: {snippet}")))
            }
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if message.contains("timed out") || message.contains("timeout") {
                    Err(GatewayError::Timeout(config.timeout_ms))
                } else {
                    Err(GatewayError::Transport(message))
                }
            }
        }
    }
}

fn parse_completion(body: &str) -> Result<String, GatewayError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Transport(format!("non-JSON completion response: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| GatewayError::Transport("unexpected completion response shape".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_standard_completion_shape() {
        let body = r#"{"choices": [{"message": {"role": "assistant", "content": "hello"}}]}"#;
        assert_eq!(parse_completion(body).unwrap(), "hello");
    }

    #[test]
    fn rejects_unexpected_shapes() {
        assert!(parse_completion("{}").is_err());
        assert!(parse_completion("not json").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // Port 1 refuses connections immediately.
        let config = BackendConfig {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".to_string(),
            kind: crate::gateway::BackendKind::Http,
            timeout_ms: 2_000,
            ..BackendConfig::mock("http-test")
        };
        let err = HttpTransport
            .send(
                &config,
                &ChatRequest {
                    label: "t",
                    prompt: "p",
                },
            )
            .unwrap_err();
        assert!(matches!(
            err,
            GatewayError::Transport(_) | GatewayError::Timeout(_)
        ));
    }
}
