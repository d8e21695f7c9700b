//! Language identification and per-session language state.
//!
//! Detection scores the input against character-trigram frequency profiles
//! (one per language) by cosine similarity. Profiles are filtered by writing
//! system first, so e.g. Han-only text can never be labelled with a
//! Latin-script language.

mod catalog;
mod profile;
mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{language_info, LanguageInfo, KNOWN_LANGUAGES};
pub use profile::{normalize_for_trigrams, trigram_counts, LanguageProfile, LanguageProfileSet};
pub use session::{resolve_session_language, LanguageSource, SessionLanguageState};

/// Scores below this floor are treated as "no match".
pub const SCORE_FLOOR: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum LangIdError {
    #[error("text is empty after trimming whitespace")]
    EmptyText,
    #[error("no language profile scored above the floor of {SCORE_FLOOR}")]
    NoProfileMatch,
    #[error("invalid language code {0:?}: must be non-empty and lowercase")]
    InvalidCode(String),
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("malformed profile {name}: line {line}: {reason}")]
    MalformedProfile {
        name: String,
        line: usize,
        reason: String,
    },
    #[error("io error reading profiles: {0}")]
    Io(String),
}

/// Writing system of a text or a language profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Script {
    Latin,
    Cyrillic,
    Han,
    Arabic,
    Devanagari,
    Other,
}

impl Script {
    pub fn of_char(c: char) -> Option<Script> {
        if !c.is_alphabetic() {
            return None;
        }
        let cp = c as u32;
        let script = match cp {
            0x0041..=0x024F | 0x1E00..=0x1EFF | 0x2C60..=0x2C7F | 0xA720..=0xA7FF => Script::Latin,
            0x0400..=0x052F | 0x1C80..=0x1C8F | 0x2DE0..=0x2DFF | 0xA640..=0xA69F => {
                Script::Cyrillic
            }
            0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F => Script::Han,
            0x0600..=0x06FF
            | 0x0750..=0x077F
            | 0x08A0..=0x08FF
            | 0xFB50..=0xFDFF
            | 0xFE70..=0xFEFF => Script::Arabic,
            0x0900..=0x097F | 0xA8E0..=0xA8FF => Script::Devanagari,
            _ => Script::Other,
        };
        Some(script)
    }

    /// Majority script over the alphabetic characters of `text`.
    pub fn dominant(text: &str) -> Script {
        let mut counts = [0usize; 6];
        for c in text.chars() {
            if let Some(s) = Script::of_char(c) {
                counts[s as usize] += 1;
            }
        }
        let order = [
            Script::Latin,
            Script::Cyrillic,
            Script::Han,
            Script::Arabic,
            Script::Devanagari,
            Script::Other,
        ];
        let mut best = Script::Other;
        let mut best_count = 0;
        for s in order {
            if counts[s as usize] > best_count {
                best = s;
                best_count = counts[s as usize];
            }
        }
        best
    }

    /// Scripts written without spaces between words.
    pub fn is_unsegmented(self) -> bool {
        matches!(self, Script::Han)
    }
}

/// A detected or user-selected language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageTag {
    pub code: String,
    pub script: Script,
    pub confidence: f64,
}

impl LanguageTag {
    pub fn new(code: &str, script: Script, confidence: f64) -> Result<Self, LangIdError> {
        if code.is_empty() || code.chars().any(|c| c.is_uppercase()) {
            return Err(LangIdError::InvalidCode(code.to_string()));
        }
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(LangIdError::InvalidConfidence(confidence));
        }
        Ok(Self {
            code: code.to_string(),
            script,
            confidence,
        })
    }

    /// A tag chosen explicitly by the user; always full confidence.
    pub fn from_override(code: &str) -> Result<Self, LangIdError> {
        let code = code.trim().to_lowercase();
        let script = language_info(&code)
            .map(|info| info.script)
            .unwrap_or(Script::Latin);
        Self::new(&code, script, 1.0)
    }

    /// The session fallback language (English).
    pub fn default_language() -> Self {
        Self {
            code: "en".into(),
            script: Script::Latin,
            confidence: 1.0,
        }
    }
}

/// Identify the language of `text` against `profiles`.
pub fn detect_language(
    text: &str,
    profiles: &LanguageProfileSet,
) -> Result<LanguageTag, LangIdError> {
    if text.trim().is_empty() {
        return Err(LangIdError::EmptyText);
    }
    let script = Script::dominant(text);
    let counts = trigram_counts(text);
    let norm = counts
        .values()
        .map(|&c| (c as f64) * (c as f64))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Err(LangIdError::NoProfileMatch);
    }

    let mut scored: Vec<(f64, &LanguageProfile)> = profiles
        .iter()
        .filter(|p| p.script() == script)
        .map(|p| (p.cosine(&counts, norm), p))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| b.1.size().cmp(&a.1.size()))
            .then_with(|| a.1.code().cmp(b.1.code()))
    });

    let (top_score, top) = match scored.first() {
        Some(&(s, p)) if s >= SCORE_FLOOR => (s, p),
        _ => return Err(LangIdError::NoProfileMatch),
    };
    let runner_up = scored.get(1).map(|&(s, _)| s.max(0.0)).unwrap_or(0.0);
    let confidence = ((top_score - runner_up) / top_score).clamp(0.0, 1.0);
    LanguageTag::new(top.code(), top.script(), confidence)
}

/// Fallback for text that no profile matches: when exactly one profile
/// is written in the text's dominant script, that language is the only
/// candidate. Short Han or Cyrillic commands often share too few trigrams
/// with their profile to clear the floor. Confidence is 0.
pub fn script_fallback(text: &str, profiles: &LanguageProfileSet) -> Option<LanguageTag> {
    let script = Script::dominant(text);
    let mut same = profiles.iter().filter(|p| p.script() == script);
    match (same.next(), same.next()) {
        (Some(p), None) => LanguageTag::new(p.code(), script, 0.0).ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> LanguageProfileSet {
        LanguageProfileSet::bundled()
    }

    #[test]
    fn detects_english_and_german() {
        let profiles = bundled();
        assert_eq!(
            detect_language("Move forward 2 meters", &profiles)
                .unwrap()
                .code,
            "en"
        );
        assert_eq!(
            detect_language("Gehe 2 Meter geradeaus", &profiles)
                .unwrap()
                .code,
            "de"
        );
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(detect_language("", &bundled()), Err(LangIdError::EmptyText));
        assert_eq!(
            detect_language("   \t", &bundled()),
            Err(LangIdError::EmptyText)
        );
    }

    #[test]
    fn digits_only_have_no_match() {
        assert_eq!(
            detect_language("12 34", &bundled()),
            Err(LangIdError::NoProfileMatch)
        );
    }

    #[test]
    fn han_text_never_gets_latin_code() {
        let tag = detect_language("向前走两米", &bundled()).unwrap();
        assert_eq!(tag.script, Script::Han);
        assert_eq!(tag.code, "zh");
    }

    #[test]
    fn script_without_profile_has_no_match() {
        assert_eq!(
            detect_language("आगे बढ़ो", &bundled()),
            Err(LangIdError::NoProfileMatch)
        );
    }

    #[test]
    fn unique_script_fallback() {
        let profiles = bundled();
        let tag = script_fallback("拍照", &profiles).unwrap();
        assert_eq!((tag.code.as_str(), tag.confidence), ("zh", 0.0));
        assert_eq!(script_fallback("Сделай", &profiles).unwrap().code, "ru");
        assert!(script_fallback("go", &profiles).is_none());
        assert!(script_fallback("आगे", &profiles).is_none());
    }

    #[test]
    fn tag_invariants() {
        assert!(LanguageTag::new("EN", Script::Latin, 0.5).is_err());
        assert!(LanguageTag::new("", Script::Latin, 0.5).is_err());
        assert!(LanguageTag::new("en", Script::Latin, 1.5).is_err());
        let t = LanguageTag::from_override("FR").unwrap();
        assert_eq!(t.code, "fr");
        assert_eq!(t.confidence, 1.0);
    }

    #[test]
    fn confidence_in_unit_interval() {
        let tag = detect_language("Fahre zur Küche und warte dort", &bundled()).unwrap();
        assert!((0.0..=1.0).contains(&tag.confidence));
    }
}
