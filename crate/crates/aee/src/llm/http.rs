//! HTTP backends speaking the OpenAI-compatible wire protocol.

use serde_json::{json, Value};

use super::{BackendReply, ChatBackend, ChatRequest, EmbedBackend, GatewayError, TokenUsage};

fn transport(message: impl Into<String>) -> GatewayError {
    GatewayError::Transport { attempts: 1, message: message.into() }
}

pub struct HttpChatBackend {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpChatBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let mut body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
        });
        if let Some(schema) = &req.output_schema {
            let schema: Value = serde_json::from_str(schema)
                .map_err(|e| GatewayError::BadReply(format!("invalid output schema: {e}")))?;
            let name = schema
                .get("title")
                .and_then(Value::as_str)
                .unwrap_or("structured_output")
                .to_string();
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": name, "schema": schema, "strict": true}
            });
        }
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::Auth(format!("chat endpoint returned {status}")));
        }
        if !status.is_success() {
            return Err(transport(format!(
                "chat endpoint returned {status}: {}",
                response.text().unwrap_or_default()
            )));
        }
        let payload: Value = response.json().map_err(|e| transport(e.to_string()))?;
        let text = payload["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::BadReply("missing choices[0].message.content".into()))?
            .to_string();
        let usage = TokenUsage {
            prompt_tokens: payload["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: payload["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(BackendReply { text, usage })
    }
}

pub struct HttpEmbedBackend {
    base_url: String,
    api_key: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        HttpEmbedBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn tag(&self) -> String {
        format!("http:{}", self.model)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let response = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&json!({ "model": self.model, "input": texts }))
            .send()
            .map_err(|e| transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::Auth(format!("embedding endpoint returned {status}")));
        }
        if !status.is_success() {
            return Err(transport(format!("embedding endpoint returned {status}")));
        }
        let payload: Value = response.json().map_err(|e| transport(e.to_string()))?;
        let data = payload["data"]
            .as_array()
            .ok_or_else(|| GatewayError::BadReply("missing data array".into()))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let vector: Vec<f32> = item["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::BadReply("missing embedding array".into()))?
                .iter()
                .map(|v| v.as_f64().unwrap_or(0.0) as f32)
                .collect();
            out.push(vector);
        }
        Ok(out)
    }
}
