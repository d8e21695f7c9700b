use serde::{Deserialize, Serialize};

use crate::langid::{language_info, Script};

/// Characters tokenized one per token because the script puts no spaces
/// between words.
fn unsegmented(c: char) -> bool {
    Script::of_char(c).is_some_and(Script::is_unsegmented)
        || matches!(c as u32, 0x3040..=0x30FF | 0x0E00..=0x0E7F | 0x0E80..=0x0EFF | 0x1000..=0x109F)
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || is_mark(c)) && !unsegmented(c)
}

/// Combining marks (Devanagari vowel signs, Arabic harakat and so on) are
/// not alphanumeric but belong to the word they sit on.
fn is_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x0483..=0x0489 | 0x0591..=0x05C7 | 0x0610..=0x061A
        | 0x064B..=0x065F | 0x0670 | 0x06D6..=0x06ED | 0x0900..=0x0903
        | 0x093A..=0x094F | 0x0951..=0x0957 | 0x0962..=0x0963 | 0x200C..=0x200D)
}

fn decimal_mark(lang: &str) -> char {
    if language_info(lang).is_some_and(|i| i.decimal_comma) {
        ','
    } else {
        '.'
    }
}

/// Rule-based tokenizer: words are runs of letters, digits and combining
/// marks; numbers keep their decimal separator (`,` for decimal-comma
/// languages); Han, kana and similar characters are one token each; every
/// other non-space character is its own token. Word-internal hyphens and
/// apostrophes stay inside the word.
pub fn tokenize(text: &str, lang: &str) -> Vec<String> {
    let dec = decimal_mark(lang);
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == dec && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // digits glued to letters ("2m") split; letters glued to digits stay a word
            out.push(chars[start..i].iter().collect());
        } else if is_word_char(c) {
            let start = i;
            while i < chars.len() {
                let ch = chars[i];
                let joiner = matches!(ch, '-' | '\'' | '’')
                    && i > start
                    && chars.get(i + 1).is_some_and(|&n| is_word_char(n) && !n.is_ascii_digit());
                if is_word_char(ch) || joiner {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Meter,
    MeterPerSecond,
    Degree,
    DegreePerSecond,
    Second,
    Percent,
    None,
}

/// A number mentioned in an action string, after unit normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: f64,
    pub unit: Unit,
}

impl Param {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    /// Same unit and values within 1e-6.
    pub fn matches(&self, other: &Param) -> bool {
        self.unit == other.unit && (self.value - other.value).abs() <= 1e-6
    }
}

/// Unit spellings, longest first so `m/s` wins over `m`. Each maps to a
/// normalized unit and a scale factor.
const UNITS: &[(&str, Unit, f64)] = &[
    ("degrees per second", Unit::DegreePerSecond, 1.0),
    ("meters per second", Unit::MeterPerSecond, 1.0),
    ("metres per second", Unit::MeterPerSecond, 1.0),
    ("km/h", Unit::MeterPerSecond, 1.0 / 3.6),
    ("cm/s", Unit::MeterPerSecond, 0.01),
    ("m/s", Unit::MeterPerSecond, 1.0),
    ("deg/s", Unit::DegreePerSecond, 1.0),
    ("°/s", Unit::DegreePerSecond, 1.0),
    ("rad/s", Unit::DegreePerSecond, 180.0 / std::f64::consts::PI),
    ("centimeters", Unit::Meter, 0.01),
    ("centimetres", Unit::Meter, 0.01),
    ("millimeters", Unit::Meter, 0.001),
    ("kilometers", Unit::Meter, 1000.0),
    ("meters", Unit::Meter, 1.0),
    ("metres", Unit::Meter, 1.0),
    ("meter", Unit::Meter, 1.0),
    ("metre", Unit::Meter, 1.0),
    ("degrees", Unit::Degree, 1.0),
    ("degree", Unit::Degree, 1.0),
    ("radians", Unit::Degree, 180.0 / std::f64::consts::PI),
    ("seconds", Unit::Second, 1.0),
    ("second", Unit::Second, 1.0),
    ("minutes", Unit::Second, 60.0),
    ("minute", Unit::Second, 60.0),
    ("deg", Unit::Degree, 1.0),
    ("rad", Unit::Degree, 180.0 / std::f64::consts::PI),
    ("sec", Unit::Second, 1.0),
    ("min", Unit::Second, 60.0),
    ("ms", Unit::Second, 0.001),
    ("cm", Unit::Meter, 0.01),
    ("mm", Unit::Meter, 0.001),
    ("km", Unit::Meter, 1000.0),
    ("m", Unit::Meter, 1.0),
    ("s", Unit::Second, 1.0),
    ("°", Unit::Degree, 1.0),
    ("%", Unit::Percent, 1.0),
];

/// Numeric parameters of an action string in textual order, with units
/// normalized to m, m/s, deg, deg/s and s.
pub fn extract_params(text: &str) -> Vec<Param> {
    extract_params_in(text, "en")
}

/// Like [`extract_params`], reading `,` as the decimal mark for
/// decimal-comma languages.
pub fn extract_params_in(text: &str, lang: &str) -> Vec<Param> {
    let dec = decimal_mark(lang);
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_word = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == dec);
        if !c.is_ascii_digit() || prev_word {
            i += 1;
            continue;
        }
        let negative = i > 0
            && chars[i - 1] == '-'
            && (i == 1 || !chars[i - 2].is_alphanumeric());
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        if i + 1 < chars.len() && chars[i] == dec && chars[i + 1].is_ascii_digit() {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
        }
        let literal: String = chars[start..i]
            .iter()
            .map(|&ch| if ch == dec { '.' } else { ch })
            .collect();
        let Ok(mut value) = literal.parse::<f64>() else {
            continue;
        };
        if negative {
            value = -value;
        }
        let rest: String = chars[i..].iter().collect();
        let trimmed = rest.trim_start();
        let skipped = rest.chars().count() - trimmed.chars().count();
        let lower = trimmed.to_lowercase();
        let mut unit = Unit::None;
        for (spelling, u, scale) in UNITS {
            if let Some(after) = lower.strip_prefix(spelling) {
                let boundary = after.chars().next().is_none_or(|n| !n.is_alphanumeric());
                if boundary {
                    value *= scale;
                    unit = *u;
                    i += skipped + spelling.chars().count();
                    break;
                }
            }
        }
        out.push(Param::new(value, unit));
    }
    out
}
