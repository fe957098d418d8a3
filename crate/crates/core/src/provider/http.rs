//! HTTP request translators. Each turns a single user message into the
//! vendor's JSON body and reads text plus token usage from the reply.

use std::time::Duration;

use serde_json::{json, Value};

use super::{AttemptError, Backend, Decoding, ProviderConfig, ProviderError, RawCompletion};

fn http_client(name: &str) -> Result<reqwest::blocking::Client, ProviderError> {
    reqwest::blocking::Client::builder()
        .build()
        .map_err(|e| ProviderError::Config {
            name: name.to_owned(),
            message: e.to_string(),
        })
}

fn post_json(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    api_key: Option<&str>,
    body: &Value,
    timeout: Duration,
) -> Result<Value, AttemptError> {
    let mut req = client.post(endpoint).timeout(timeout).json(body);
    if let Some(key) = api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| {
        if e.is_timeout() {
            AttemptError::Timeout
        } else {
            AttemptError::Transient(e.to_string())
        }
    })?;
    let status = resp.status().as_u16();
    let text = resp.text().map_err(|e| {
        if e.is_timeout() {
            AttemptError::Timeout
        } else {
            AttemptError::Transient(e.to_string())
        }
    })?;
    if !(200..300).contains(&status) {
        return Err(AttemptError::from_status(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| AttemptError::Transient(format!("malformed response body: {e}")))
}

/// OpenAI-compatible chat completions.
pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: Option<String>,
    api_key: Option<String>,
    decoding: Decoding,
}

impl OpenAiBackend {
    pub fn new(cfg: &ProviderConfig, api_key: Option<String>) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(&cfg.name)?,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model.clone(),
            api_key,
            decoding: cfg.decoding.clone(),
        })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_output_tokens,
        });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        body
    }

    pub fn parse_response(v: &Value) -> Result<RawCompletion, AttemptError> {
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AttemptError::Transient("response has no choices[0].message.content".into()))?;
        Ok(RawCompletion {
            text: text.to_owned(),
            input_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            output_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        })
    }
}

impl Backend for OpenAiBackend {
    fn attempt(&self, prompt: &str, _attempt: u32, timeout: Duration) -> Result<RawCompletion, AttemptError> {
        let v = post_json(
            &self.client,
            &self.endpoint,
            self.api_key.as_deref(),
            &self.request_body(prompt),
            timeout,
        )?;
        Self::parse_response(&v)
    }
}

/// Vertex AI chat models (`...:predict`).
pub struct VertexBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    decoding: Decoding,
}

impl VertexBackend {
    pub fn new(cfg: &ProviderConfig, api_key: Option<String>) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(&cfg.name)?,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            api_key,
            decoding: cfg.decoding.clone(),
        })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "instances": [{"messages": [{"author": "user", "content": prompt}]}],
            "parameters": {
                "temperature": self.decoding.temperature,
                "maxOutputTokens": self.decoding.max_output_tokens,
            },
        })
    }

    pub fn parse_response(v: &Value) -> Result<RawCompletion, AttemptError> {
        let text = v
            .pointer("/predictions/0/candidates/0/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AttemptError::Transient("response has no predictions[0].candidates[0].content".into()))?;
        let tokens = |which: &str| {
            v.pointer(&format!("/metadata/tokenMetadata/{which}/totalTokens"))
                .and_then(Value::as_u64)
        };
        Ok(RawCompletion {
            text: text.to_owned(),
            input_tokens: tokens("inputTokenCount"),
            output_tokens: tokens("outputTokenCount"),
        })
    }
}

impl Backend for VertexBackend {
    fn attempt(&self, prompt: &str, _attempt: u32, timeout: Duration) -> Result<RawCompletion, AttemptError> {
        let v = post_json(
            &self.client,
            &self.endpoint,
            self.api_key.as_deref(),
            &self.request_body(prompt),
            timeout,
        )?;
        Self::parse_response(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openai_shapes() {
        let mut cfg = ProviderConfig::mock("x", Default::default());
        cfg.model = Some("gpt-3.5-turbo".into());
        let b = OpenAiBackend::new(&cfg, None).unwrap();
        let body = b.request_body("hi");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["temperature"], 0.0);

        let resp = json!({"choices":[{"message":{"role":"assistant","content":"sum"}}],
                          "usage":{"prompt_tokens":12,"completion_tokens":3}});
        let raw = OpenAiBackend::parse_response(&resp).unwrap();
        assert_eq!(
            (raw.text.as_str(), raw.input_tokens, raw.output_tokens),
            ("sum", Some(12), Some(3))
        );
        let bare = OpenAiBackend::parse_response(&json!({"choices":[{"message":{"content":"s"}}]})).unwrap();
        assert_eq!(bare.input_tokens, None);
        assert!(OpenAiBackend::parse_response(&json!({})).is_err());
    }

    #[test]
    fn vertex_shapes() {
        let cfg = ProviderConfig::mock("x", Default::default());
        let b = VertexBackend::new(&cfg, None).unwrap();
        let body = b.request_body("hi");
        assert_eq!(body["instances"][0]["messages"][0]["content"], "hi");
        assert_eq!(body["parameters"]["maxOutputTokens"], 512);
        let resp = json!({"predictions":[{"candidates":[{"author":"1","content":"s"}]}],
                          "metadata":{"tokenMetadata":{"inputTokenCount":{"totalTokens":7},
                                                       "outputTokenCount":{"totalTokens":2}}}});
        let raw = VertexBackend::parse_response(&resp).unwrap();
        assert_eq!((raw.input_tokens, raw.output_tokens), (Some(7), Some(2)));
    }
}
