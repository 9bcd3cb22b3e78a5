use std::time::Duration;

use serde_json::json;

use super::{LanguageModelClient, LmError, PromptRequest};

/// Client for a chat-completions style endpoint
/// (`{"model", "messages"} -> {"choices": [{"message": {"content"}}]}`).
pub struct HttpLm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpLm {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), model: model.into(), api_key, agent }
    }
}

impl LanguageModelClient for HttpLm {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, LmError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": request.prompt }],
        })
        .to_string();
        let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.as_bytes()).map_err(|e| LmError::Transport(e.to_string()))?;
        let raw = resp.body_mut().read_to_string().map_err(|e| LmError::Transport(e.to_string()))?;
        let v: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| LmError::malformed(e.to_string(), raw.clone()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LmError::malformed("no choices[0].message.content", raw))
    }
}
