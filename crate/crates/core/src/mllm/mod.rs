//! Vision-chat requests, prompt templates, response parsing and backends.

mod http;
mod parse;
mod prompt;

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use self::http::{wire, HttpChatBackend, CHAT_ROUTE, MLLM_URL_ENV};
pub use self::parse::{
    parse_affordance, parse_frame_tag, parse_verdict, render_affordance, AffordanceResponse,
    ParseError, PixelPoint, Verdict, VerificationVerdict,
};
pub use self::prompt::{
    build_round1_prompt, build_round2_prompt, build_verify_prompt, frame_tag, PromptError,
    TaggedImage, ROUND1_MARKER, ROUND2_PREFIX, VERIFY_PREFIX,
};
pub use crate::error::BackendError;

/// One ordered piece of a chat message.
#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    /// An image preceded by its tag, e.g. `<frame 12>:`.
    Image { tag: String, image: Arc<RgbImage> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub parts: Vec<ContentPart>,
    pub max_response_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn text_parts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            ContentPart::Text(t) => Some(t.as_str()),
            ContentPart::Image { .. } => None,
        })
    }

    pub fn image_parts(&self) -> impl Iterator<Item = (&str, &RgbImage)> {
        self.parts.iter().filter_map(|p| match p {
            ContentPart::Image { tag, image } => Some((tag.as_str(), image.as_ref())),
            ContentPart::Text(_) => None,
        })
    }

    /// All text parts joined by newlines.
    pub fn prompt_text(&self) -> String {
        self.text_parts().collect::<Vec<_>>().join("\n")
    }

    pub fn image_tags(&self) -> Vec<String> {
        self.image_parts().map(|(t, _)| t.to_string()).collect()
    }

    pub fn with_options(mut self, opts: &ChatOptions) -> Self {
        self.temperature = opts.temperature;
        self
    }
}

/// Sampling options applied to every request the pipeline issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatOptions {
    pub temperature: f64,
}

impl Default for ChatOptions {
    fn default() -> Self {
        Self { temperature: 0.0 }
    }
}

/// A vision-chat model. Implementations must be safe to call concurrently.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(req)
    }
}

/// Sends `req` through `backend`, logging the exchange at debug level.
pub fn chat(backend: &dyn ChatBackend, req: &ChatRequest) -> Result<String, BackendError> {
    let started = std::time::Instant::now();
    let result = backend.chat(req);
    match &result {
        Ok(text) => tracing::debug!(
            images = req.image_parts().count(),
            elapsed_ms = started.elapsed().as_millis() as u64,
            prompt = %req.prompt_text(),
            response = %text,
            "chat exchange"
        ),
        Err(e) => tracing::debug!(error = %e, prompt = %req.prompt_text(), "chat failed"),
    }
    result
}
