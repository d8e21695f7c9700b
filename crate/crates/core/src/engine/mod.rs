//! Instruction interpretation: prompt construction, LLM or mock completion,
//! `Action k:` parsing and the confirmation classifier.

mod action;
mod confirm;
mod fixtures;
mod llm;
mod parser;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::*;
pub use confirm::{
    classify_confirmation, ConfirmationDecision, LexiconSet, TemplateLexicon,
    CONFIRM_NEGATIVE_WEIGHT, CONFIRM_POSITIVE_WEIGHT,
};
pub use fixtures::{normalize_instruction_text, FixtureCorpus, FixtureRecord};
pub use llm::{
    mock_complete, rule_reply, ChatMessage, ChatRequest, HttpChatClient, LanguageModelClient,
    LlmConfig, MockClient, DEFAULT_ANGULAR_SPEED_DEG,
};
pub use parser::{extract_action_lines, is_action_line, parse_action_body, parse_action_lines};
pub use prompt::{
    build_system_prompt, compass_direction, PromptBundle, RobotContext, PROMPT_SECTIONS,
};

use crate::langid::LanguageTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown action verb in {0:?}")]
    UnknownActionVerb(String),
    #[error("action numbering must start at 1 and increase: got {found} after {expected_after}")]
    NonmonotoneNumbering { expected_after: u64, found: u64 },
    #[error("negative parameter: {0}")]
    NegativeParameter(String),
    #[error("language model did not answer in time: {0}")]
    LlmTimeout(String),
    #[error("malformed language model response: {0}")]
    LlmProtocolError(String),
    #[error("no fixture or rule matches {text:?} ({lang})")]
    NoFixture { text: String, lang: String },
    #[error("no confirmation template matched")]
    Indeterminate,
    #[error("prompt needs at least one named destination")]
    NoDestinations,
    #[error("empty instruction text")]
    EmptyInstruction,
    #[error("invalid lexicon {name}: {reason}")]
    InvalidLexicon { name: String, reason: String },
    #[error("invalid fixture corpus: {0}")]
    InvalidFixture(String),
}

impl EngineError {
    /// Transport failures the caller may retry.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            EngineError::LlmTimeout(_) | EngineError::LlmProtocolError(_)
        )
    }
}

/// A user command as received by a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub language: LanguageTag,
    pub issued_at_ms: u64,
    pub session_id: String,
}

impl Instruction {
    pub fn new(
        text: &str,
        language: LanguageTag,
        issued_at_ms: u64,
        session_id: &str,
    ) -> Result<Self, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::EmptyInstruction);
        }
        Ok(Self {
            text: text.to_string(),
            language,
            issued_at_ms,
            session_id: session_id.to_string(),
        })
    }
}

/// The model's answer to one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub raw_reply: String,
    /// Non-action lines of the reply.
    pub summary: String,
    pub plan_lines: Vec<String>,
}

impl Interpretation {
    pub fn from_reply(raw_reply: String) -> Self {
        let plan_lines = extract_action_lines(&raw_reply);
        let summary = raw_reply
            .lines()
            .filter(|l| !is_action_line(l))
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            raw_reply,
            summary,
            plan_lines,
        }
    }
}

/// Ask `client` to interpret `instr` under `prompt`.
pub fn interpret(
    instr: &Instruction,
    prompt: &PromptBundle,
    client: &dyn LanguageModelClient,
) -> Result<Interpretation, EngineError> {
    let request = prompt.to_request(&instr.text);
    let reply = client.complete(instr, &request)?;
    Ok(Interpretation::from_reply(reply))
}
