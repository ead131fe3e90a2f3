//! Chat-completion client for hosted language models.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_completion, render_prompt, validate_response, BackendError, JudgmentBackend, JudgmentRequest, JudgmentResponse, TemplateSet};
use crate::Scalar;

pub const API_KEY_ENV: &str = "REPUNET_API_KEY";

const SYSTEM_PROMPT: &str = "You play one agent in a repeated social game. Stay in character and always finish with the answer line in exactly the requested form.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// Directory of `.txt` templates overriding the built-in ones.
    pub templates_dir: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_tokens: 300,
            timeout_secs: 60,
            max_attempts: 3,
            api_key_env: API_KEY_ENV.into(),
            templates_dir: None,
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            errs.push("remote.endpoint must be an http(s) URL".to_string());
        }
        if self.model.trim().is_empty() {
            errs.push("remote.model must not be empty".to_string());
        }
        if self.max_attempts == 0 {
            errs.push("remote.max_attempts must be at least 1".to_string());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            errs.push("remote.temperature must lie in [0, 2]".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    api_key: Option<String>,
    templates: TemplateSet,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(cfg, key)
    }

    pub fn new(cfg: RemoteConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        cfg.validate().map_err(|e| BackendError::Config(e.join("; ")))?;
        let templates = match &cfg.templates_dir {
            Some(dir) => TemplateSet::from_dir(std::path::Path::new(dir))?,
            None => TemplateSet::builtin(),
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(RemoteBackend {
            cfg,
            api_key,
            templates,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        });
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status != 200 {
            let snippet: String = text.chars().take(200).collect();
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("response lacks choices[0].message.content".into()))
    }
}

impl<F: Scalar> JudgmentBackend<F> for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn judge(&self, req: &JudgmentRequest<F>) -> Result<JudgmentResponse<F>, BackendError> {
        let prompt = render_prompt(req, &self.templates)?;
        let mut last = String::new();
        for _ in 0..self.cfg.max_attempts {
            let attempt = self
                .complete(&prompt)
                .and_then(|raw| parse_completion(req, &raw))
                .and_then(|resp| validate_response(req, resp.clone()).map(|_| resp));
            match attempt {
                Ok(resp) => return Ok(resp),
                Err(e @ (BackendError::Transport(_) | BackendError::Malformed(_) | BackendError::InvalidResponse(_))) => last = e.to_string(),
                Err(e) => return Err(e),
            }
        }
        Err(BackendError::Exhausted {
            attempts: self.cfg.max_attempts,
            last,
        })
    }
}
