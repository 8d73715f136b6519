//! OpenAI-compatible chat completions over HTTP. Ollama's `/api/chat` reply
//! shape is accepted as well.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ReasonerConfig, ReasonerError};

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
}

impl HttpBackend {
    pub fn new(cfg: &ReasonerConfig) -> Result<Self, ReasonerError> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| ReasonerError::Config("the http backend needs an endpoint".into()))?;
        let base = endpoint.trim_end_matches('/');
        let url = if cfg.path.is_empty() || base.ends_with(cfg.path.trim_end_matches('/')) {
            base.to_string()
        } else {
            format!("{base}/{}", cfg.path.trim_start_matches('/'))
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend { agent, url, model: cfg.model.clone() })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// The assistant text of a chat completion reply.
pub fn reply_content(body: &Value) -> Option<&str> {
    body.pointer("/choices/0/message/content").or_else(|| body.pointer("/message/content")).and_then(Value::as_str)
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, req: &ChatRequest<'_>) -> Result<String, ReasonerError> {
        let body = json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "stream": false,
        });
        let fail = |m: String| ReasonerError::Endpoint(format!("{}: {m}", self.url));
        let mut resp = self.agent.post(&self.url).send_json(&body).map_err(|e| fail(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| fail(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(fail(format!("HTTP {status}: {snippet}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| fail(format!("reply is not JSON: {e}")))?;
        reply_content(&v).map(str::to_string).ok_or_else(|| fail("reply has no message content".into()))
    }
}
