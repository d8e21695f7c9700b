use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::langid::language_info;

/// A message rendered for the user. `fallback` is set when the requested
/// language had no template and English was used instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedText {
    pub text: String,
    pub language: String,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CatalogFile {
    templates: BTreeMap<String, String>,
    compass: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ResponseCatalog {
    languages: BTreeMap<String, CatalogFile>,
}

const BUNDLED: [(&str, &str); 10] = [
    ("ar", include_str!("../../data/responses/ar.json")),
    ("de", include_str!("../../data/responses/de.json")),
    ("en", include_str!("../../data/responses/en.json")),
    ("es", include_str!("../../data/responses/es.json")),
    ("fr", include_str!("../../data/responses/fr.json")),
    ("it", include_str!("../../data/responses/it.json")),
    ("pcm", include_str!("../../data/responses/pcm.json")),
    ("ru", include_str!("../../data/responses/ru.json")),
    ("sw", include_str!("../../data/responses/sw.json")),
    ("zh", include_str!("../../data/responses/zh.json")),
];

fn parse(code: &str, json: &str) -> Result<CatalogFile, ExecError> {
    let f: CatalogFile = serde_json::from_str(json)
        .map_err(|e| ExecError::InvalidCatalog(format!("{code}: {e}")))?;
    if f.compass.len() != 8 {
        return Err(ExecError::InvalidCatalog(format!(
            "{code}: compass needs 8 names"
        )));
    }
    Ok(f)
}

impl ResponseCatalog {
    pub fn bundled() -> Self {
        let languages = BUNDLED
            .iter()
            .map(|(c, j)| (c.to_string(), parse(c, j).expect("bundled catalog is valid")))
            .collect();
        Self { languages }
    }

    /// Load every `<code>.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ExecError> {
        let mut languages = BTreeMap::new();
        let entries =
            std::fs::read_dir(dir).map_err(|e| ExecError::InvalidCatalog(e.to_string()))?;
        for entry in entries.flatten() {
            let p = entry.path();
            if p.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(code) = p.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let json = std::fs::read_to_string(&p)
                .map_err(|e| ExecError::InvalidCatalog(e.to_string()))?;
            languages.insert(code.to_string(), parse(code, &json)?);
        }
        if !languages.contains_key("en") {
            return Err(ExecError::InvalidCatalog(
                "catalog needs an English file".into(),
            ));
        }
        Ok(Self { languages })
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.languages.keys().map(String::as_str)
    }

    fn pick(&self, lang: &str, key: &str) -> (String, String, bool) {
        if let Some(t) = self.languages.get(lang).and_then(|f| f.templates.get(key)) {
            return (lang.to_string(), t.clone(), false);
        }
        let t = self
            .languages
            .get("en")
            .and_then(|f| f.templates.get(key))
            .map_or_else(|| key.to_string(), String::clone);
        ("en".to_string(), t, true)
    }

    /// Fill template `key` in `lang`, substituting `{name}` placeholders.
    pub fn render(&self, lang: &str, key: &str, args: &[(&str, String)]) -> LocalizedText {
        let (language, mut text, fallback) = self.pick(lang, key);
        for (name, value) in args {
            text = text.replace(&format!("{{{name}}}"), value);
        }
        LocalizedText {
            text,
            language,
            fallback,
        }
    }

    /// Compass point name for a yaw in degrees (0 = east, counter-clockwise).
    pub fn compass(&self, lang: &str, yaw_deg: f64) -> String {
        let names = self
            .languages
            .get(lang)
            .or_else(|| self.languages.get("en"))
            .map(|f| &f.compass);
        let k = ((yaw_deg.rem_euclid(360.0) + 22.5) / 45.0).floor() as usize % 8;
        names.map_or_else(|| crate::engine::compass_direction(yaw_deg).to_string(), |n| n[k].clone())
    }
}

/// Format a number with `decimals` places using the language's decimal mark.
pub fn format_number(v: f64, decimals: usize, lang: &str) -> String {
    let v = if v.abs() < 0.5 * 10f64.powi(-(decimals as i32)) {
        0.0
    } else {
        v
    };
    let s = format!("{v:.decimals$}");
    if language_info(lang).is_some_and(|i| i.decimal_comma) {
        s.replace('.', ",")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_falls_back() {
        let c = ResponseCatalog::bundled();
        let t = c.render("de", "speed_limited", &[("v", "0,5".into())]);
        assert_eq!(t.text, "Die Höchstgeschwindigkeit beträgt jetzt 0,5 m/s.");
        assert!(!t.fallback);
        let t = c.render("yo", "done", &[]);
        assert_eq!((t.text.as_str(), t.language.as_str(), t.fallback), ("Done.", "en", true));
    }

    #[test]
    fn every_language_has_every_key() {
        let c = ResponseCatalog::bundled();
        let keys: Vec<&String> = c.languages["en"].templates.keys().collect();
        for (code, f) in &c.languages {
            for k in &keys {
                assert!(f.templates.contains_key(*k), "{code} lacks {k}");
            }
        }
    }

    #[test]
    fn compass_and_numbers() {
        let c = ResponseCatalog::bundled();
        assert_eq!(c.compass("en", 90.0), "north");
        assert_eq!(c.compass("de", -90.0), "Süden");
        assert_eq!(format_number(2.0, 2, "en"), "2.00");
        assert_eq!(format_number(-0.001, 2, "fr"), "0,00");
        assert_eq!(format_number(1.26, 1, "zh"), "1.3");
    }
}
