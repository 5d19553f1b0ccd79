use super::{ProposerBackend, ProposerError};
use serde_json::{json, Value};
use std::time::Duration;

/// Posts `{system, user, temperature, n}` to a local completion endpoint.
pub struct HttpProposer {
    url: String,
    agent: ureq::Agent,
}

impl HttpProposer {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpProposer { url: url.to_string(), agent }
    }

    fn post(&self, body: &Value) -> Result<String, ureq::Error> {
        let resp = self.agent.post(&self.url).send_json(body.clone())?;
        Ok(resp.into_string()?)
    }
}

/// Completion text from the common response shapes: `{"text"}`,
/// `{"completion"}`, `{"choices":[{"text"}|{"message":{"content"}}]}`, or a
/// plain-text body.
pub fn completion_text(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let pick = |v: &Value| v.as_str().map(str::to_string);
    if let Some(t) = pick(&v["text"]).or_else(|| pick(&v["completion"])) {
        return t;
    }
    if let Some(choices) = v["choices"].as_array() {
        return choices
            .iter()
            .filter_map(|c| pick(&c["text"]).or_else(|| pick(&c["message"]["content"])))
            .collect::<Vec<_>>()
            .join("\n");
    }
    match v {
        Value::String(s) => s,
        _ => String::new(),
    }
}

impl ProposerBackend for HttpProposer {
    fn complete(&self, system: &str, user: &str, temperature: f64, max_samples: usize) -> Result<String, ProposerError> {
        let body = json!({ "system": system, "user": user, "temperature": temperature, "n": max_samples });
        let result = match self.post(&body) {
            // one retry on transport failure only
            Err(ureq::Error::Transport(_)) => self.post(&body),
            other => other,
        };
        result
            .map(|b| completion_text(&b))
            .map_err(|e| ProposerError::Unavailable(e.to_string()))
    }

    fn name(&self) -> &str {
        "http"
    }
}
