use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::langid::Script;

/// Relevance of a label to the command text, in `[0, 1]`.
pub trait SimilarityScorer: Send + Sync {
    fn sim(&self, label: &str, command: &str) -> f64;
}

/// Token overlap between label and command after mapping known synonyms
/// (in any bundled language) onto their canonical label.
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    synonyms: BTreeMap<String, Vec<String>>,
}

const BUNDLED_SYNONYMS: &str = include_str!("../../data/synonyms.json");

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn mentions(command_lc: &str, command_tokens: &[String], word: &str) -> bool {
    let word = word.to_lowercase();
    if word
        .chars()
        .any(|c| Script::of_char(c) == Some(Script::Han))
    {
        return command_lc.contains(&word);
    }
    let wt = tokens(&word);
    !wt.is_empty() && command_tokens.windows(wt.len()).any(|w| w == wt.as_slice())
}

impl LexicalScorer {
    pub fn new(synonyms: BTreeMap<String, Vec<String>>) -> Self {
        Self { synonyms }
    }

    pub fn bundled() -> Self {
        Self::new(serde_json::from_str(BUNDLED_SYNONYMS).expect("bundled synonym table is valid"))
    }

    fn canonical_of(&self, label: &str) -> Option<&str> {
        let lc = label.to_lowercase();
        self.synonyms
            .iter()
            .find(|(k, words)| **k == lc || words.iter().any(|w| w.to_lowercase() == lc))
            .map(|(k, _)| k.as_str())
    }

    /// Canonical labels named anywhere in `text`.
    pub fn labels_in(&self, text: &str) -> Vec<&str> {
        let lc = text.to_lowercase();
        let toks = tokens(&lc);
        self.synonyms
            .iter()
            .filter(|(k, words)| {
                mentions(&lc, &toks, k) || words.iter().any(|w| mentions(&lc, &toks, w))
            })
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

impl SimilarityScorer for LexicalScorer {
    fn sim(&self, label: &str, command: &str) -> f64 {
        if let Some(canon) = self.canonical_of(label) {
            if self.labels_in(command).contains(&canon) {
                return 1.0;
            }
        }
        let lt = tokens(label);
        if lt.is_empty() {
            return 0.0;
        }
        let ct = tokens(command);
        let hit = lt.iter().filter(|t| ct.contains(t)).count();
        hit as f64 / lt.len() as f64
    }
}

/// One localized candidate for target selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingCandidate {
    pub track_id: u64,
    pub labels: Vec<String>,
    pub p_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub track_id: u64,
    pub label_index: usize,
    pub label: String,
    pub score: f64,
}

/// Joint visuo-lingual score of one (candidate, label) pair.
pub fn grounding_score(p_prime: f64, sim: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * p_prime.ln() + lambda2 * sim
}

/// Pick the (candidate, label) pair with the best joint score. Ties go to the
/// lowest track id, then the earliest label.
pub fn select_target(
    candidates: &[GroundingCandidate],
    command: &str,
    lambda1: f64,
    lambda2: f64,
    scorer: &dyn SimilarityScorer,
) -> Result<Selection, PerceptionError> {
    let mut order: Vec<&GroundingCandidate> = candidates.iter().collect();
    order.sort_by_key(|c| c.track_id);
    let mut best: Option<Selection> = None;
    for c in order {
        for (j, (label, p)) in c.labels.iter().zip(&c.p_prime).enumerate() {
            let score = grounding_score(*p, scorer.sim(label, command), lambda1, lambda2);
            if score.is_nan() {
                continue;
            }
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Selection {
                    track_id: c.track_id,
                    label_index: j,
                    label: label.clone(),
                    score,
                });
            }
        }
    }
    best.ok_or(PerceptionError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Table(Vec<(&'static str, f64)>);
    impl SimilarityScorer for Table {
        fn sim(&self, label: &str, _: &str) -> f64 {
            self.0
                .iter()
                .find(|(l, _)| *l == label)
                .map_or(0.0, |(_, s)| *s)
        }
    }

    fn cand(id: u64, label: &str, p: f64) -> GroundingCandidate {
        GroundingCandidate {
            track_id: id,
            labels: vec![label.into()],
            p_prime: vec![p],
        }
    }

    #[test]
    fn single_candidate_wins() {
        let s = select_target(
            &[cand(4, "chair", 0.3)],
            "go",
            0.6,
            0.4,
            &LexicalScorer::bundled(),
        )
        .unwrap();
        assert_eq!(s.track_id, 4);
    }

    #[test]
    fn two_candidates_brute_force() {
        let cands = [cand(1, "a", 0.9), cand(2, "b", 0.6)];
        let scorer = Table(vec![("a", 0.2), ("b", 0.9)]);
        let s = select_target(&cands, "", 0.6, 0.4, &scorer).unwrap();
        let sa = 0.6 * 0.9f64.ln() + 0.4 * 0.2;
        let sb = 0.6 * 0.6f64.ln() + 0.4 * 0.9;
        assert_eq!(s.track_id, if sa > sb { 1 } else { 2 });
    }

    #[test]
    fn ties_go_to_lowest_track() {
        let cands = [cand(7, "cup", 0.5), cand(3, "cup", 0.5)];
        let s = select_target(&cands, "", 0.6, 0.4, &LexicalScorer::bundled()).unwrap();
        assert_eq!(s.track_id, 3);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(
            select_target(&[], "x", 0.6, 0.4, &LexicalScorer::bundled()),
            Err(PerceptionError::NoCandidates)
        );
    }

    #[test]
    fn lexical_synonyms_across_languages() {
        let s = LexicalScorer::bundled();
        assert_eq!(s.sim("chair", "Geh zum Stuhl"), 1.0);
        assert_eq!(s.sim("chair", "走到椅子那里"), 1.0);
        assert_eq!(s.sim("couch", "go to the sofa"), 1.0);
        assert_eq!(s.sim("chair", "go to the bottle"), 0.0);
        assert_eq!(s.sim("potted plant", "the green plant"), 1.0);
    }
}
