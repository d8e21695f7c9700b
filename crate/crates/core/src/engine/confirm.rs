use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::langid::{LanguageTag, Script};

pub const CONFIRM_POSITIVE_WEIGHT: f64 = 1.0;
pub const CONFIRM_NEGATIVE_WEIGHT: f64 = -2.0;

/// Positive and negative reply templates for one language. The first entry
/// of each list is the canonical phrase a client sends for approve/reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl TemplateLexicon {
    pub fn parse(name: &str, json: &str) -> Result<Self, EngineError> {
        let lex: TemplateLexicon =
            serde_json::from_str(json).map_err(|e| EngineError::InvalidLexicon {
                name: name.to_string(),
                reason: e.to_string(),
            })?;
        if lex.positive.is_empty() || lex.negative.is_empty() {
            return Err(EngineError::InvalidLexicon {
                name: name.to_string(),
                reason: "both template lists must be non-empty".into(),
            });
        }
        Ok(lex)
    }

    pub fn canonical_positive(&self) -> &str {
        &self.positive[0]
    }

    pub fn canonical_negative(&self) -> &str {
        &self.negative[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationDecision {
    /// 1 approves the pending plan, 0 discards it.
    pub value: u8,
    pub matched_template: String,
    pub score: f64,
}

macro_rules! bundled_lexicons {
    ($($code:literal),* $(,)?) => {
        &[$(($code, include_str!(concat!("../../data/lexicon/", $code, ".json")))),*]
    };
}

const BUNDLED: &[(&str, &str)] =
    bundled_lexicons!("ar", "de", "en", "es", "fr", "it", "pcm", "ru", "sw", "zh");

/// Lexicons keyed by language code.
#[derive(Debug, Clone, Default)]
pub struct LexiconSet {
    by_code: BTreeMap<String, TemplateLexicon>,
}

impl LexiconSet {
    pub fn bundled() -> Self {
        let by_code = BUNDLED
            .iter()
            .map(|(code, body)| {
                (
                    code.to_string(),
                    TemplateLexicon::parse(code, body).expect("bundled lexicon is valid"),
                )
            })
            .collect();
        Self { by_code }
    }

    pub fn load_dir(dir: &Path) -> Result<Self, EngineError> {
        let io = |e: std::io::Error| EngineError::InvalidLexicon {
            name: dir.display().to_string(),
            reason: e.to_string(),
        };
        let mut by_code = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let code = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let body = std::fs::read_to_string(&path).map_err(io)?;
            by_code.insert(code.clone(), TemplateLexicon::parse(&code, &body)?);
        }
        Ok(Self { by_code })
    }

    pub fn get(&self, code: &str) -> Option<&TemplateLexicon> {
        self.by_code.get(code)
    }

    pub fn english(&self) -> Option<&TemplateLexicon> {
        self.get("en")
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.by_code.keys().map(String::as_str)
    }
}

const CLAUSE_BREAKS: &[char] = &[
    ',', ';', '.', '!', '?', '،', '؛', '，', '。', '！', '？', '；', '\n',
];

/// Lowercase and reduce to letters, digits, apostrophes and hyphens separated
/// by single spaces, padded with a space on each side.
fn normalize(text: &str) -> String {
    let mut out = String::from(" ");
    for c in text.chars().flat_map(char::to_lowercase) {
        let c = if c == '’' || c == '`' { '\'' } else { c };
        if c.is_alphanumeric() || c == '\'' || c == '-' {
            out.push(c);
        } else if !out.ends_with(' ') {
            out.push(' ');
        }
    }
    if !out.ends_with(' ') {
        out.push(' ');
    }
    out
}

fn contains_template(clause: &str, template: &str, unsegmented: bool) -> bool {
    let t = normalize(template);
    if t.trim().is_empty() {
        return false;
    }
    if unsegmented {
        clause.contains(t.trim())
    } else {
        clause.contains(&t)
    }
}

struct Hits<'a> {
    positive: Vec<&'a str>,
    negative: Vec<&'a str>,
}

fn score_with<'a>(reply: &str, lex: &'a TemplateLexicon, unsegmented: bool) -> Hits<'a> {
    let mut hits = Hits {
        positive: Vec::new(),
        negative: Vec::new(),
    };
    for clause in reply.split(CLAUSE_BREAKS) {
        let clause = normalize(clause);
        let neg: Vec<&str> = lex
            .negative
            .iter()
            .filter(|t| contains_template(&clause, t, unsegmented))
            .map(String::as_str)
            .collect();
        if neg.is_empty() {
            hits.positive.extend(
                lex.positive
                    .iter()
                    .filter(|t| contains_template(&clause, t, unsegmented))
                    .map(String::as_str),
            );
        }
        hits.negative.extend(neg);
    }
    hits
}

/// Decide whether `reply` approves the pending plan.
///
/// Each matched positive template adds [`CONFIRM_POSITIVE_WEIGHT`] and each
/// negative one adds [`CONFIRM_NEGATIVE_WEIGHT`]; a negative template in a
/// clause cancels the positives of that clause. When the language lexicon
/// matches nothing, the English lexicon is tried before giving up.
pub fn classify_confirmation(
    reply: &str,
    language: &LanguageTag,
    lexicons: &LexiconSet,
) -> Result<ConfirmationDecision, EngineError> {
    let unsegmented = Script::dominant(reply).is_unsegmented();
    let mut candidates = Vec::new();
    if let Some(l) = lexicons.get(&language.code) {
        candidates.push(l);
    }
    if language.code != "en" {
        if let Some(l) = lexicons.english() {
            candidates.push(l);
        }
    }
    for lex in candidates {
        let hits = score_with(reply, lex, unsegmented);
        if hits.positive.is_empty() && hits.negative.is_empty() {
            continue;
        }
        let score = hits.positive.len() as f64 * CONFIRM_POSITIVE_WEIGHT
            + hits.negative.len() as f64 * CONFIRM_NEGATIVE_WEIGHT;
        let value = u8::from(score > 0.0);
        let matched = if value == 1 {
            hits.positive[0]
        } else {
            hits.negative
                .first()
                .or(hits.positive.first())
                .copied()
                .unwrap_or_default()
        };
        return Ok(ConfirmationDecision {
            value,
            matched_template: matched.to_string(),
            score,
        });
    }
    Err(EngineError::Indeterminate)
}
