use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// One canned turn: the instruction, the reply the model would give, and the
/// expected canonical actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub lang: String,
    pub text: String,
    pub reply: String,
    pub gold_actions: Vec<String>,
    /// Task category tag (`G_n`, `W_c`, `Q_i`, `O_n`, `C_r`); optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Lowercased, whitespace-collapsed text with trailing sentence punctuation
/// removed; the lookup key for fixtures.
pub fn normalize_instruction_text(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(['.', '!', '?', '。', '！', '？', '؟'])
        .trim()
        .to_string()
}

#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    records: Vec<FixtureRecord>,
    by_key: HashMap<(String, String), usize>,
    by_text: HashMap<String, Vec<usize>>,
}

const BUNDLED_CORPUS: &str = include_str!("../../data/fixtures/corpus.jsonl");

impl FixtureCorpus {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        let mut by_key = HashMap::new();
        let mut by_text: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let text = normalize_instruction_text(&r.text);
            by_key.entry((text.clone(), r.lang.clone())).or_insert(i);
            by_text.entry(text).or_default().push(i);
        }
        Self {
            records,
            by_key,
            by_text,
        }
    }

    pub fn parse_jsonl(contents: &str) -> Result<Self, EngineError> {
        let mut records = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: FixtureRecord = serde_json::from_str(line)
                .map_err(|e| EngineError::InvalidFixture(format!("line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Ok(Self::new(records))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let contents = std::fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidFixture(format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(&contents)
    }

    /// The 10-language corpus shipped with the library.
    pub fn bundled() -> Self {
        Self::parse_jsonl(BUNDLED_CORPUS).expect("bundled corpus is valid")
    }

    /// Exact `(text, lang)` match first, then a text match that is unique
    /// across languages.
    pub fn lookup(&self, text: &str, lang: &str) -> Option<&FixtureRecord> {
        let key = normalize_instruction_text(text);
        if let Some(&i) = self.by_key.get(&(key.clone(), lang.to_string())) {
            return Some(&self.records[i]);
        }
        match self.by_text.get(&key).map(Vec::as_slice) {
            Some([i]) => Some(&self.records[*i]),
            _ => None,
        }
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
