use std::sync::Arc;

use super::{ChatBackend, ChatRequest, ContentPart};
use crate::error::BackendError;
use crate::transport::{join_url, JsonClient, RetryPolicy};

pub const MLLM_URL_ENV: &str = "FUNCGROUND_MLLM_URL";
pub const CHAT_ROUTE: &str = "/v1/chat";
const DEFAULT_MODEL: &str = "default";

/// JSON shapes of the `/v1/chat` contract.
pub mod wire {
    use super::*;
    use serde::{Deserialize, Serialize};

    use crate::transport::{png_base64_decode, png_base64_encode};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ChatWireRequest {
        pub model: String,
        pub temperature: f64,
        pub max_tokens: u32,
        pub messages: Vec<WireMessage>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct WireMessage {
        pub role: String,
        pub content: Vec<WireContent>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "type", rename_all = "lowercase")]
    pub enum WireContent {
        Text { text: String },
        Image { png_base64: String, tag: String },
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ChatWireResponse {
        pub text: String,
    }

    /// A request field that could not be decoded.
    #[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
    #[error("{field}: {message}")]
    pub struct FieldError {
        pub field: String,
        pub message: String,
    }

    pub fn encode_request(req: &ChatRequest, model: &str) -> ChatWireRequest {
        let content = req
            .parts
            .iter()
            .map(|p| match p {
                ContentPart::Text(text) => WireContent::Text { text: text.clone() },
                ContentPart::Image { tag, image } => {
                    WireContent::Image { png_base64: png_base64_encode(image), tag: tag.clone() }
                }
            })
            .collect();
        ChatWireRequest {
            model: model.to_string(),
            temperature: req.temperature,
            max_tokens: req.max_response_tokens,
            messages: vec![WireMessage { role: "user".into(), content }],
        }
    }

    /// Inverse of [`encode_request`]; all messages are flattened in order.
    pub fn decode_request(req: &ChatWireRequest) -> Result<ChatRequest, FieldError> {
        let mut parts = Vec::new();
        for (m, msg) in req.messages.iter().enumerate() {
            for (c, item) in msg.content.iter().enumerate() {
                parts.push(match item {
                    WireContent::Text { text } => ContentPart::Text(text.clone()),
                    WireContent::Image { png_base64, tag } => {
                        let image = png_base64_decode(png_base64).map_err(|message| FieldError {
                            field: format!("messages[{m}].content[{c}].png_base64"),
                            message,
                        })?;
                        ContentPart::Image { tag: tag.clone(), image: Arc::new(image) }
                    }
                });
            }
        }
        Ok(ChatRequest { parts, max_response_tokens: req.max_tokens, temperature: req.temperature })
    }
}

/// Vision-chat backend reached over HTTP.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    client: JsonClient,
    url: String,
    model: String,
}

impl HttpChatBackend {
    pub fn new(endpoint: &str) -> Self {
        Self::with_policy(endpoint, RetryPolicy::default())
    }

    pub fn with_policy(endpoint: &str, policy: RetryPolicy) -> Self {
        Self { client: JsonClient::new(policy), url: join_url(endpoint, CHAT_ROUTE), model: DEFAULT_MODEL.into() }
    }

    /// Endpoint taken from `FUNCGROUND_MLLM_URL`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(MLLM_URL_ENV).ok().filter(|s| !s.trim().is_empty()).map(|u| Self::new(&u))
    }

    pub fn model(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let body = wire::encode_request(req, &self.model);
        let resp: wire::ChatWireResponse = self.client.post(&self.url, &body)?;
        Ok(resp.text)
    }
}
