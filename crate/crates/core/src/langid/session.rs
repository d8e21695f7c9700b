use serde::{Deserialize, Serialize};

use super::LanguageTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageSource {
    Detected,
    Override,
}

/// Language state of one session. While an override is active, detection
/// results are ignored until the override is cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLanguageState {
    pub current: LanguageTag,
    pub source: LanguageSource,
    pub history: Vec<(u64, LanguageTag)>,
}

impl Default for SessionLanguageState {
    fn default() -> Self {
        Self::new(LanguageTag::default_language())
    }
}

impl SessionLanguageState {
    pub fn new(initial: LanguageTag) -> Self {
        Self {
            current: initial,
            source: LanguageSource::Detected,
            history: Vec::new(),
        }
    }

    pub fn set_override(&mut self, tag: LanguageTag, at_ms: u64) {
        let tag = LanguageTag {
            confidence: 1.0,
            ..tag
        };
        self.current = tag.clone();
        self.source = LanguageSource::Override;
        self.history.push((at_ms, tag));
    }

    pub fn clear_override(&mut self) {
        self.source = LanguageSource::Detected;
    }

    pub fn is_overridden(&self) -> bool {
        self.source == LanguageSource::Override
    }
}

/// Pick the language for the current turn.
///
/// An override wins and leaves the state untouched; otherwise the detected tag
/// becomes current and is appended to the history.
pub fn resolve_session_language(
    state: &mut SessionLanguageState,
    detected: LanguageTag,
    at_ms: u64,
) -> LanguageTag {
    match state.source {
        LanguageSource::Override => state.current.clone(),
        LanguageSource::Detected => {
            state.current = detected.clone();
            state.history.push((at_ms, detected.clone()));
            detected
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langid::Script;

    fn tag(code: &str) -> LanguageTag {
        LanguageTag::new(code, Script::Latin, 0.8).unwrap()
    }

    #[test]
    fn override_bypasses_detection() {
        let mut state = SessionLanguageState::default();
        state.set_override(LanguageTag::from_override("fr").unwrap(), 1);
        let before = state.clone();
        let got = resolve_session_language(&mut state, tag("en"), 2);
        assert_eq!(got.code, "fr");
        assert_eq!(state, before);
    }

    #[test]
    fn detected_fixed_point() {
        let mut state = SessionLanguageState::new(tag("en"));
        assert_eq!(
            resolve_session_language(&mut state, tag("en"), 1).code,
            "en"
        );
    }

    #[test]
    fn detected_switch_grows_history() {
        let mut state = SessionLanguageState::new(tag("en"));
        let n = state.history.len();
        let got = resolve_session_language(&mut state, tag("ig"), 5);
        assert_eq!(got.code, "ig");
        assert_eq!(state.current.code, "ig");
        assert_eq!(state.history.len(), n + 1);
    }

    #[test]
    fn clearing_override_restores_detection() {
        let mut state = SessionLanguageState::default();
        state.set_override(tag("fr"), 0);
        state.clear_override();
        assert_eq!(
            resolve_session_language(&mut state, tag("de"), 1).code,
            "de"
        );
    }
}
