//! Evaluation over logged interactions (instruction parsing accuracy, task
//! success rate, response time) and translation quality checks.

mod report;
mod text;
mod translation;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use report::{
    build_report, translation_qc, MetricsReport, OverallRow, ReportRow, TranslationQcReport,
    TranslationScores, TranslationSummary,
};
pub use text::{extract_params, extract_params_in, tokenize, Param, Unit};
pub use translation::{
    bleu, bleu_weighted, levenshtein, modified_precision, per, s_per, shift_block, ter, ter_edits,
    vematch, BLEU_PRECISION_FLOOR, TER_MAX_SHIFTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("input token list is empty")]
    EmptyInput,
    #[error("reference is empty")]
    EmptyReference,
    #[error("semantic scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("invalid record at line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

/// One logged instruction with its gold and predicted action strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub lang: String,
    pub text: String,
    pub t_ins_ms: u64,
    pub t_res_ms: u64,
    pub gold_actions: Vec<String>,
    pub pred_actions: Vec<String>,
    #[serde(serialize_with = "ser_flag", deserialize_with = "de_flag")]
    pub success: bool,
}

fn ser_flag<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

/// Accepts `0`/`1` or `true`/`false`.
fn de_flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        B(bool),
        N(u64),
    }
    match Flag::deserialize(d)? {
        Flag::B(b) => Ok(b),
        Flag::N(0) => Ok(false),
        Flag::N(1) => Ok(true),
        Flag::N(n) => Err(serde::de::Error::custom(format!("success must be 0 or 1, got {n}"))),
    }
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.t_res_ms < self.t_ins_ms {
            return Err("t_res_ms is before t_ins_ms".into());
        }
        if self.lang.is_empty() {
            return Err("lang is empty".into());
        }
        Ok(())
    }

    pub fn response_time_ms(&self) -> u64 {
        self.t_res_ms - self.t_ins_ms
    }
}

/// Source sentence with a candidate and a reference translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub source: String,
    pub lang: String,
    pub hyp: String,
    #[serde(rename = "ref")]
    pub reference: String,
}

impl TranslationRecord {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("source", &self.source),
            ("lang", &self.lang),
            ("hyp", &self.hyp),
            ("ref", &self.reference),
        ] {
            if v.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        Ok(())
    }
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(
    contents: &str,
    validate: impl Fn(&T) -> Result<(), String>,
) -> Result<Vec<T>, MetricsError> {
    let mut out = Vec::new();
    for (k, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| MetricsError::InvalidRecord { line: k + 1, reason };
        let r: T = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        validate(&r).map_err(bad)?;
        out.push(r);
    }
    Ok(out)
}

pub fn parse_interactions(contents: &str) -> Result<Vec<InteractionRecord>, MetricsError> {
    parse_jsonl(contents, InteractionRecord::validate)
}

pub fn load_interactions(path: &Path) -> Result<Vec<InteractionRecord>, MetricsError> {
    let s = std::fs::read_to_string(path).map_err(|e| MetricsError::Io(e.to_string()))?;
    parse_interactions(&s)
}

pub fn parse_translations(contents: &str) -> Result<Vec<TranslationRecord>, MetricsError> {
    parse_jsonl(contents, TranslationRecord::validate)
}

pub fn load_translations(path: &Path) -> Result<Vec<TranslationRecord>, MetricsError> {
    let s = std::fs::read_to_string(path).map_err(|e| MetricsError::Io(e.to_string()))?;
    parse_translations(&s)
}

/// Sum with pairwise splitting so the rounding error grows with log n and
/// the result does not depend on how records were batched.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(pairwise_sum(xs) / xs.len() as f64)
}

/// Population standard deviation; 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = pairwise_sum(xs) / xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / xs.len() as f64).sqrt()
}

/// Semantic similarity of two action lists in [0, 1].
pub trait SemanticScorer {
    fn score(&self, reference: &[String], hypothesis: &[String]) -> Result<f64, MetricsError>;
}

fn action_tokens(actions: &[String]) -> Vec<String> {
    actions
        .iter()
        .flat_map(|a| tokenize(&a.to_lowercase(), "en"))
        .collect()
}

/// F1 over the multisets of lowercased tokens of the two action lists.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1Scorer;

pub fn token_f1<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> f64 {
    if reference.is_empty() && hypothesis.is_empty() {
        return 1.0;
    }
    if reference.is_empty() || hypothesis.is_empty() {
        return 0.0;
    }
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *bag.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in hypothesis {
        if let Some(c) = bag.get_mut(t.as_ref()).filter(|c| **c > 0) {
            *c -= 1;
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hypothesis.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

impl SemanticScorer for TokenF1Scorer {
    fn score(&self, reference: &[String], hypothesis: &[String]) -> Result<f64, MetricsError> {
        Ok(token_f1(&action_tokens(reference), &action_tokens(hypothesis)))
    }
}

/// Maps tokens to embedding vectors, e.g. a remote multilingual encoder.
pub trait TokenEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricsError>;
}

/// Greedy cosine matching of token embeddings: precision averages each
/// hypothesis token's best match in the reference, recall the reverse, and
/// the score is their harmonic mean.
pub struct EmbeddingScorer<E> {
    pub embedder: E,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn greedy_match(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let best: Vec<f64> = from
        .iter()
        .map(|e| to.iter().map(|o| cosine(e, o)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    pairwise_sum(&best) / from.len() as f64
}

impl<E: TokenEmbedder> SemanticScorer for EmbeddingScorer<E> {
    fn score(&self, reference: &[String], hypothesis: &[String]) -> Result<f64, MetricsError> {
        let (rt, ht) = (action_tokens(reference), action_tokens(hypothesis));
        if rt.is_empty() || ht.is_empty() {
            return Ok(if rt.is_empty() && ht.is_empty() { 1.0 } else { 0.0 });
        }
        let (re, he) = (self.embedder.embed(&rt)?, self.embedder.embed(&ht)?);
        let p = greedy_match(&he, &re);
        let r = greedy_match(&re, &he);
        if p + r <= 0.0 {
            return Ok(0.0);
        }
        Ok((2.0 * p * r / (p + r)).clamp(0.0, 1.0))
    }
}

/// Weights and threshold of the parsing-accuracy score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpaParams {
    pub gamma: f64,
    pub w_semantic: f64,
    pub w_params: f64,
}

impl Default for IpaParams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            w_semantic: 0.4,
            w_params: 0.6,
        }
    }
}

impl IpaParams {
    pub fn combined(&self, semantic: f64, params: f64) -> f64 {
        self.w_semantic * semantic + self.w_params * params
    }

    pub fn is_correct(&self, semantic: f64, params: f64) -> bool {
        self.combined(semantic, params) >= self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub semantic: f64,
    pub params: f64,
    pub combined: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpaOutcome {
    pub ipa: f64,
    pub scored: usize,
    /// Records the semantic scorer could not handle.
    pub excluded: usize,
    pub per_record: Vec<Option<RecordScore>>,
}

/// All numeric parameters of an action list, in order.
pub fn action_params(actions: &[String]) -> Vec<Param> {
    actions.iter().flat_map(|a| extract_params(a)).collect()
}

pub fn score_record(
    r: &InteractionRecord,
    scorer: &dyn SemanticScorer,
    params: &IpaParams,
) -> Result<RecordScore, MetricsError> {
    let semantic = scorer.score(&r.gold_actions, &r.pred_actions)?;
    let p = s_per(&action_params(&r.gold_actions), &action_params(&r.pred_actions));
    Ok(RecordScore {
        semantic,
        params: p,
        combined: params.combined(semantic, p),
        correct: params.is_correct(semantic, p),
    })
}

/// Share of records whose combined score reaches the threshold. Records the
/// scorer rejects are left out and counted.
pub fn ipa(
    records: &[InteractionRecord],
    scorer: &dyn SemanticScorer,
    params: &IpaParams,
) -> Result<IpaOutcome, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let per_record: Vec<Option<RecordScore>> = records
        .iter()
        .map(|r| match score_record(r, scorer, params) {
            Ok(s) => Some(s),
            Err(MetricsError::ScorerUnavailable(_)) => None,
            Err(e) => {
                tracing::warn!("record not scored: {e}");
                None
            }
        })
        .collect();
    let hits: Vec<f64> = per_record
        .iter()
        .flatten()
        .map(|s| f64::from(u8::from(s.correct)))
        .collect();
    let ipa = mean(&hits)?;
    Ok(IpaOutcome {
        ipa,
        scored: hits.len(),
        excluded: records.len() - hits.len(),
        per_record,
    })
}

/// Parsing accuracy from precomputed (semantic, parameter) score pairs.
pub fn ipa_from_scores(scores: &[(f64, f64)], params: &IpaParams) -> Result<f64, MetricsError> {
    let hits: Vec<f64> = scores
        .iter()
        .map(|&(s, p)| f64::from(u8::from(params.is_correct(s, p))))
        .collect();
    mean(&hits)
}

/// Task success rate: mean of the success flags.
pub fn tsr(records: &[InteractionRecord]) -> Result<f64, MetricsError> {
    let flags: Vec<f64> = records.iter().map(|r| f64::from(u8::from(r.success))).collect();
    mean(&flags)
}

/// Average response time in seconds.
pub fn art(records: &[InteractionRecord]) -> Result<f64, MetricsError> {
    let gaps: Vec<f64> = records
        .iter()
        .map(|r| r.t_res_ms.saturating_sub(r.t_ins_ms) as f64)
        .collect();
    Ok(mean(&gaps)? / 1000.0)
}
