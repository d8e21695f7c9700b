use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{LangIdError, Script};

/// Number of trigrams kept when training a profile.
pub const PROFILE_TRIGRAMS: usize = 400;

/// Lowercase, drop everything that is not a letter, and pad words with a
/// single space on each side.
pub fn normalize_for_trigrams(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push(' ');
    let mut last_space = true;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphabetic() {
            out.push(c);
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    if !last_space {
        out.push(' ');
    }
    out
}

/// Raw character-trigram counts of `text` after normalization.
pub fn trigram_counts(text: &str) -> HashMap<String, u32> {
    let chars: Vec<char> = normalize_for_trigrams(text).chars().collect();
    let mut counts = HashMap::new();
    for w in chars.windows(3) {
        // a trigram of spaces only carries no signal
        if w.iter().all(|c| *c == ' ') {
            continue;
        }
        *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone)]
pub struct LanguageProfile {
    code: String,
    script: Script,
    freqs: HashMap<String, f64>,
    norm: f64,
}

impl LanguageProfile {
    pub fn from_frequencies(code: &str, freqs: HashMap<String, f64>) -> Self {
        let norm = freqs.values().map(|f| f * f).sum::<f64>().sqrt();
        let script = dominant_script(&freqs);
        Self {
            code: code.to_string(),
            script,
            freqs,
            norm,
        }
    }

    /// Build a profile from sample text, keeping the most frequent trigrams.
    pub fn train(code: &str, corpus: &str) -> Self {
        let counts = trigram_counts(corpus);
        let mut ranked: Vec<(String, u32)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(PROFILE_TRIGRAMS);
        let total: u32 = ranked.iter().map(|(_, c)| c).sum();
        let freqs = ranked
            .into_iter()
            .map(|(t, c)| (t, c as f64 / total.max(1) as f64))
            .collect();
        Self::from_frequencies(code, freqs)
    }

    /// Parse the `trigram<TAB>relative_frequency` file format.
    pub fn parse(code: &str, contents: &str) -> Result<Self, LangIdError> {
        let mut freqs = HashMap::new();
        for (i, line) in contents.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: &str| LangIdError::MalformedProfile {
                name: code.to_string(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let (tri, freq) = line
                .split_once('\t')
                .ok_or_else(|| malformed("missing tab"))?;
            if tri.chars().count() != 3 {
                return Err(malformed("trigram must be exactly three characters"));
            }
            let freq: f64 = freq
                .trim()
                .parse()
                .map_err(|_| malformed("frequency is not a number"))?;
            if !freq.is_finite() || freq < 0.0 {
                return Err(malformed("frequency must be finite and non-negative"));
            }
            freqs.insert(tri.to_string(), freq);
        }
        if freqs.is_empty() {
            return Err(LangIdError::MalformedProfile {
                name: code.to_string(),
                line: 0,
                reason: "profile is empty".into(),
            });
        }
        Ok(Self::from_frequencies(code, freqs))
    }

    /// Serialize in the profile file format, most frequent first.
    pub fn to_file_string(&self) -> String {
        let mut entries: Vec<(&String, &f64)> = self.freqs.iter().collect();
        entries.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::new();
        for (tri, f) in entries {
            let _ = writeln!(out, "{tri}\t{f:.8}");
        }
        out
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn script(&self) -> Script {
        self.script
    }

    /// Number of trigrams in the profile; used to break score ties.
    pub fn size(&self) -> usize {
        self.freqs.len()
    }

    pub fn cosine(&self, counts: &HashMap<String, u32>, counts_norm: f64) -> f64 {
        if self.norm == 0.0 || counts_norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = counts
            .iter()
            .filter_map(|(t, &c)| self.freqs.get(t).map(|f| f * c as f64))
            .sum();
        dot / (self.norm * counts_norm)
    }
}

fn dominant_script(freqs: &HashMap<String, f64>) -> Script {
    let mut weights: HashMap<Script, f64> = HashMap::new();
    for (tri, f) in freqs {
        for c in tri.chars() {
            if let Some(s) = Script::of_char(c) {
                *weights.entry(s).or_insert(0.0) += f;
            }
        }
    }
    weights
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(s, _)| s)
        .unwrap_or(Script::Other)
}

macro_rules! bundled_profiles {
    ($($code:literal),* $(,)?) => {
        &[$(($code, include_str!(concat!("../../data/langid/profiles/", $code, ".tsv")))),*]
    };
}

const BUNDLED: &[(&str, &str)] =
    bundled_profiles!("ar", "de", "en", "es", "fr", "it", "pcm", "ru", "sw", "zh");

/// An immutable set of language profiles.
#[derive(Debug, Clone, Default)]
pub struct LanguageProfileSet {
    profiles: Vec<LanguageProfile>,
}

impl LanguageProfileSet {
    pub fn new(mut profiles: Vec<LanguageProfile>) -> Self {
        profiles.sort_by(|a, b| a.code.cmp(&b.code));
        Self { profiles }
    }

    /// Profiles compiled into the library.
    pub fn bundled() -> Self {
        let profiles = BUNDLED
            .iter()
            .map(|(code, body)| {
                LanguageProfile::parse(code, body).expect("bundled profile is valid")
            })
            .collect();
        Self::new(profiles)
    }

    /// Load every `<code>.tsv` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, LangIdError> {
        let entries = std::fs::read_dir(dir).map_err(|e| LangIdError::Io(e.to_string()))?;
        let mut profiles = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| LangIdError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("tsv") {
                continue;
            }
            let code = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let body =
                std::fs::read_to_string(&path).map_err(|e| LangIdError::Io(e.to_string()))?;
            profiles.push(LanguageProfile::parse(&code, &body)?);
        }
        Ok(Self::new(profiles))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageProfile> {
        self.profiles.iter()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.profiles.iter().map(|p| p.code()).collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}
