use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::action::{ActionPrimitive, MIN_LINEAR_SPEED};
use super::fixtures::FixtureCorpus;
use super::parser::parse_action_body;
use super::{EngineError, Instruction, Interpretation};
use crate::langid::LanguageTag;

/// Angular speed used by the rule grammar when the command gives none.
pub const DEFAULT_ANGULAR_SPEED_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait LanguageModelClient: Send + Sync {
    fn complete(&self, instr: &Instruction, request: &ChatRequest) -> Result<String, EngineError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_s: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key: None,
            timeout_s: 30.0,
        }
    }
}

impl LlmConfig {
    /// Apply `BABELBOT_LLM_ENDPOINT`, `BABELBOT_LLM_MODEL` and `BABELBOT_LLM_KEY`.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("BABELBOT_LLM_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("BABELBOT_LLM_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("BABELBOT_LLM_KEY") {
            self.api_key = Some(v);
        }
    }
}

/// Blocking chat-completion client.
pub struct HttpChatClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmConfig) -> Result<Self, EngineError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| EngineError::LlmProtocolError(e.to_string()))?;
        Ok(Self { config, http })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

impl LanguageModelClient for HttpChatClient {
    fn complete(&self, _instr: &Instruction, request: &ChatRequest) -> Result<String, EngineError> {
        let mut body = request.clone();
        body.model = self.config.model.clone();
        let mut req = self.http.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                EngineError::LlmTimeout(e.to_string())
            } else {
                EngineError::LlmProtocolError(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(EngineError::LlmProtocolError(format!(
                "HTTP {}",
                resp.status()
            )));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| {
            if e.is_timeout() {
                EngineError::LlmTimeout(e.to_string())
            } else {
                EngineError::LlmProtocolError(e.to_string())
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| EngineError::LlmProtocolError("response has no choices".into()))
    }
}

/// Offline client: fixture replies first, then the English rule grammar.
#[derive(Debug, Clone, Default)]
pub struct MockClient {
    pub fixtures: FixtureCorpus,
}

impl MockClient {
    pub fn new(fixtures: FixtureCorpus) -> Self {
        Self { fixtures }
    }
}

impl LanguageModelClient for MockClient {
    fn complete(&self, instr: &Instruction, _request: &ChatRequest) -> Result<String, EngineError> {
        if let Some(r) = self.fixtures.lookup(&instr.text, &instr.language.code) {
            return Ok(r.reply.clone());
        }
        rule_reply(&instr.text).ok_or_else(|| EngineError::NoFixture {
            text: instr.text.clone(),
            lang: instr.language.code.clone(),
        })
    }
}

/// Deterministic interpretation without a model.
pub fn mock_complete(
    instr: &Instruction,
    fixtures: &FixtureCorpus,
) -> Result<Interpretation, EngineError> {
    let reply = MockClient::new(fixtures.clone()).complete(
        instr,
        &ChatRequest {
            model: String::new(),
            messages: Vec::new(),
            temperature: 0.0,
            max_tokens: 500,
        },
    )?;
    Ok(Interpretation::from_reply(reply))
}

static CLAUSE_SPLIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\s*(?:,\s*(?:and\s+)?(?:then\s+)?|;\s*|\.\s+|\s+and\s+then\s+|\s+then\s+|\s+and\s+)",
    )
    .unwrap()
});
static BARE_TURN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(turn|rotate)\s+(left|right)\b(?:\s+(at\s+.*))?$").unwrap());
static CAPABILITIES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(capabilities|what can you do|who are you|help)\b").unwrap()
});

const CAPABILITIES_REPLY: &str = "I can move forward or backward, turn, navigate to coordinates, \
named places or objects I detect, drive circles, arcs, rectangles and L-shapes, describe what I \
see, report my pose and capture images.";

/// English rule grammar used when no fixture matches.
///
/// The command is split into clauses; each must parse as one action. Missing
/// linear speeds default to the minimum speed and missing angular speeds to
/// [`DEFAULT_ANGULAR_SPEED_DEG`]. A bare turn means 90 degrees.
pub fn rule_reply(text: &str) -> Option<String> {
    let trimmed = text.trim().trim_end_matches(['.', '!']).trim();
    if trimmed.ends_with('?') {
        return CAPABILITIES
            .is_match(trimmed)
            .then(|| CAPABILITIES_REPLY.to_string());
    }
    let en = LanguageTag::default_language();
    let mut lines = Vec::new();
    for clause in CLAUSE_SPLIT.split(trimmed) {
        let clause = clause.trim();
        if clause.is_empty() {
            continue;
        }
        let clause = match BARE_TURN.captures(clause) {
            Some(c) => format!(
                "{} {} 90 deg {}",
                &c[1],
                &c[2],
                c.get(3).map_or("", |m| m.as_str())
            ),
            None => clause.to_string(),
        };
        let action = with_default_speeds(parse_action_body(clause.trim(), &en).ok()?);
        lines.push(format!("Action {}: {action}", lines.len() + 1));
    }
    (!lines.is_empty()).then(|| lines.join("\n"))
}

fn with_default_speeds(a: ActionPrimitive) -> ActionPrimitive {
    match a {
        ActionPrimitive::MoveLinear {
            direction,
            distance,
            speed,
        } => ActionPrimitive::MoveLinear {
            direction,
            distance,
            speed: speed.or(Some(MIN_LINEAR_SPEED)),
        },
        ActionPrimitive::Rotate {
            direction,
            angle_deg,
            angular_speed_deg,
        } => ActionPrimitive::Rotate {
            direction,
            angle_deg,
            angular_speed_deg: angular_speed_deg.or(Some(DEFAULT_ANGULAR_SPEED_DEG)),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{build_system_prompt, interpret, FixtureRecord, RobotContext};

    fn instr(text: &str) -> Instruction {
        Instruction::new(text, LanguageTag::default_language(), 0, "s1").unwrap()
    }

    #[test]
    fn rule_path_defaults_to_min_speed() {
        let i = mock_complete(&instr("move forward 1 meter"), &FixtureCorpus::default()).unwrap();
        assert_eq!(i.raw_reply, "Action 1: Move forward 1 m at 0.2 m/s.");
    }

    #[test]
    fn rule_path_splits_clauses() {
        let r =
            rule_reply("Move forward 2 meters at 0.2m/s and then turn right at 30 deg/s.").unwrap();
        assert_eq!(
            r,
            "Action 1: Move forward 2 m at 0.2 m/s.\nAction 2: Turn right 90 deg at 30 deg/s."
        );
    }

    #[test]
    fn capabilities_question_has_no_actions() {
        let i = mock_complete(
            &instr("What are your capabilities?"),
            &FixtureCorpus::default(),
        )
        .unwrap();
        assert!(i.plan_lines.is_empty());
        assert!(!i.summary.is_empty());
    }

    #[test]
    fn unknown_text_is_no_fixture() {
        assert!(matches!(
            mock_complete(&instr("sing me a song"), &FixtureCorpus::default()),
            Err(EngineError::NoFixture { .. })
        ));
    }

    #[test]
    fn fixture_reply_is_verbatim() {
        let reply = "Sawa!\nAction 1: Move forward 2 m at 0.2 m/s.\n";
        let corpus = FixtureCorpus::new(vec![FixtureRecord {
            lang: "sw".into(),
            text: "Nenda mbele mita 2".into(),
            reply: reply.into(),
            gold_actions: vec![],
            category: None,
        }]);
        let mut i = instr("nenda mbele mita 2");
        i.language.code = "sw".into();
        assert_eq!(mock_complete(&i, &corpus).unwrap().raw_reply, reply);
    }

    #[test]
    fn interpret_is_deterministic_with_mock() {
        let prompt = build_system_prompt(
            &RobotContext::default(),
            &["kitchen".to_string()],
            &LanguageTag::default_language(),
        )
        .unwrap();
        let client = MockClient::default();
        let a = interpret(&instr("turn left and go to the kitchen"), &prompt, &client).unwrap();
        let b = interpret(&instr("turn left and go to the kitchen"), &prompt, &client).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.plan_lines,
            vec![
                "Action 1: Turn left 90 deg at 30 deg/s.",
                "Action 2: Navigate to the kitchen."
            ]
        );
    }

    #[test]
    fn unreachable_endpoint_is_timeout() {
        let client = HttpChatClient::new(LlmConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            timeout_s: 2.0,
            ..LlmConfig::default()
        })
        .unwrap();
        let prompt = build_system_prompt(
            &RobotContext::default(),
            &["kitchen".to_string()],
            &LanguageTag::default_language(),
        )
        .unwrap();
        assert!(matches!(
            interpret(&instr("move forward 1 m"), &prompt, &client),
            Err(EngineError::LlmTimeout(_))
        ));
    }
}
