use std::collections::HashSet;
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use super::{ChatRequest, ContentPart};

/// Substring identifying a Round-1 request.
pub const ROUND1_MARKER: &str = "complete three tasks:";
/// Prefix of every Round-2 request.
pub const ROUND2_PREFIX: &str = "Identify the affordance point on the ";
/// Prefix of every verification request.
pub const VERIFY_PREFIX: &str = "Does the RED highlighted region show ONLY ";

const ROUND1_TOKENS: u32 = 512;
const ROUND2_TOKENS: u32 = 128;
const VERIFY_TOKENS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no frames to attach")]
    EmptyFrameSet,
    #[error("functional object name is empty")]
    EmptyObjectName,
    #[error("overlay image is empty")]
    EmptyOverlay,
}

/// An image together with the sequence index used in its `<frame i>:` tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedImage {
    pub frame_index: usize,
    pub image: Arc<RgbImage>,
}

impl TaggedImage {
    pub fn new(frame_index: usize, image: Arc<RgbImage>) -> Self {
        Self { frame_index, image }
    }

    fn part(&self) -> ContentPart {
        ContentPart::Image { tag: frame_tag(self.frame_index), image: Arc::clone(&self.image) }
    }
}

pub fn frame_tag(index: usize) -> String {
    format!("<frame {index}>:")
}

/// Coarse-stage request: every frame tagged with its original video index,
/// followed by the three-task instruction. Repeated indices are attached once.
pub fn build_round1_prompt(task: &str, frames: &[TaggedImage]) -> Result<ChatRequest, PromptError> {
    if frames.is_empty() {
        return Err(PromptError::EmptyFrameSet);
    }
    let mut seen = HashSet::new();
    let mut parts: Vec<ContentPart> =
        frames.iter().filter(|f| seen.insert(f.frame_index)).map(TaggedImage::part).collect();
    parts.push(ContentPart::Text(format!(
        "Given these frames and the task: {task}, {ROUND1_MARKER}\n\
         1. Identify the functional object needed to accomplish the task.\n\
         2. Select the key frame that best shows the functional object.\n\
         3. Identify a single affordance point (x, y) on the functional object.\n\
         Output format: <affordance> functional object: ...; <frame n>: ...; (x, y) </affordance>"
    )));
    Ok(ChatRequest { parts, max_response_tokens: ROUND1_TOKENS, temperature: 0.0 })
}

/// Fine-stage request for one native-resolution frame.
pub fn build_round2_prompt(task: &str, object: &str, frame: &TaggedImage) -> Result<ChatRequest, PromptError> {
    let object = object.trim();
    if object.is_empty() {
        return Err(PromptError::EmptyObjectName);
    }
    Ok(ChatRequest {
        parts: vec![
            frame.part(),
            ContentPart::Text(format!(
                "{ROUND2_PREFIX}{object} in order to {task}. Output format: <affordance> (x, y) </affordance>."
            )),
        ],
        max_response_tokens: ROUND2_TOKENS,
        temperature: 0.0,
    })
}

/// Mask-overlay verification request asking for a single YES/NO token.
pub fn build_verify_prompt(object: &str, overlay: &TaggedImage) -> Result<ChatRequest, PromptError> {
    if overlay.image.width() == 0 || overlay.image.height() == 0 {
        return Err(PromptError::EmptyOverlay);
    }
    let object = object.trim();
    Ok(ChatRequest {
        parts: vec![
            overlay.part(),
            ContentPart::Text(format!(
                "{VERIFY_PREFIX}{object}?\n\
                 Answer YES only if both hold:\n\
                 1. The highlighted region is the {object}.\n\
                 2. It does not include parent or containing objects.\n\
                 Reply with a single word: YES or NO."
            )),
        ],
        max_response_tokens: VERIFY_TOKENS,
        temperature: 0.0,
    })
}
