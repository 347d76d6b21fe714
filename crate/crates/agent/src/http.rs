//! Chat-completions client for a hosted vision-language policy.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::config::PolicyConfig;
use crate::message::{Message, Part, Role};
use crate::policy::{Policy, PolicyError, TurnContext};

#[derive(Debug, Clone)]
pub struct HttpPolicy {
    cfg: PolicyConfig,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
    api_key: Option<String>,
}

enum Attempt {
    Done(Result<String, PolicyError>),
    Retry(PolicyError),
}

impl HttpPolicy {
    pub fn new(cfg: PolicyConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let client = reqwest::Client::builder()
            .timeout(cfg.request_timeout())
            .build()
            .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                PolicyError::InvalidConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(HttpPolicy {
            permits: Arc::new(Semaphore::new(cfg.max_in_flight)),
            cfg,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    /// Request body for `history`.
    pub fn request_body(&self, history: &[Message], seed: Option<u64>) -> Value {
        let mut messages = Vec::with_capacity(history.len() + 1);
        if let Some(system) = &self.cfg.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        for m in history {
            let role = match m.role {
                Role::Tool => self.cfg.observation_role,
                r => r,
            };
            messages.push(wire_message(role, m));
        }
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_turn_tokens,
        });
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// Sends `history` and returns the reply text, retrying transient failures.
    pub async fn complete(&self, history: &[Message], seed: Option<u64>) -> Result<String, PolicyError> {
        let body = self.request_body(history, seed);
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| PolicyError::EndpointUnavailable("client shut down".into()))?;
        let mut attempt = 0u32;
        loop {
            match self.attempt(&body).await {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) if attempt >= self.cfg.retry_limit => return Err(err),
                Attempt::Retry(err) => {
                    let delay = Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1 << attempt));
                    tracing::warn!(attempt, ?delay, error = %err, "retrying policy request");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.client.post(&self.cfg.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(PolicyError::TurnTimeout(self.cfg.request_timeout()))
            }
            Err(e) => return Attempt::Retry(PolicyError::EndpointUnavailable(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(PolicyError::TurnTimeout(self.cfg.request_timeout()))
            }
            Err(e) => return Attempt::Retry(PolicyError::EndpointUnavailable(e.to_string())),
        };
        if status.is_server_error() {
            return Attempt::Retry(PolicyError::EndpointUnavailable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Attempt::Done(Err(PolicyError::Rejected { status: status.as_u16(), body: text }));
        }
        Attempt::Done(parse_reply(&text))
    }
}

fn wire_message(role: Role, m: &Message) -> Value {
    let has_image = m.parts.iter().any(|p| matches!(p, Part::Image { .. }));
    if !has_image {
        return json!({"role": role, "content": m.joined_text()});
    }
    let content: Vec<Value> = m
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image { png, .. } => json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", STANDARD.encode(png))},
            }),
        })
        .collect();
    json!({"role": role, "content": content})
}

/// Extracts `choices[0].message.content`, rejecting length-truncated replies.
pub fn parse_reply(text: &str) -> Result<String, PolicyError> {
    let v: Value = serde_json::from_str(text).map_err(|e| PolicyError::BadResponse(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| PolicyError::BadResponse("no choices in reply".into()))?;
    if choice.get("finish_reason").and_then(Value::as_str) == Some("length") {
        return Err(PolicyError::ResponseTruncated);
    }
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .ok_or_else(|| PolicyError::BadResponse("reply has no message content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .concat()),
        other => Err(PolicyError::BadResponse(format!("unexpected content {other}"))),
    }
}

#[async_trait]
impl Policy for HttpPolicy {
    async fn next_turn(&self, ctx: TurnContext<'_>) -> Result<String, PolicyError> {
        if ctx.history.is_empty() {
            return Err(PolicyError::InvalidConfig("history must start with the task prompt".into()));
        }
        self.complete(ctx.history, Some(ctx.seed)).await
    }
}
