use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::engine::LlmConfig;
use crate::executor::ExecutorConfig;
use crate::perception::PerceptionConfig;
use crate::simulator::{bundled_map, MapFile};

/// Service configuration, read from one TOML or JSON file. Every field has
/// a default, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub bind: String,
    /// Static bearer token; `None` disables the check.
    pub token: Option<String>,
    /// Bundled map name (`office`, `open`) or a path to a map file.
    pub map: String,
    /// Where session logs and snapshots go; `None` keeps nothing on disk.
    pub data_dir: Option<PathBuf>,
    /// Answer from the fixture corpus and rule grammar instead of a model.
    pub mock_llm: bool,
    /// Extra fixture corpus for the mock; the bundled one otherwise.
    pub fixtures: Option<PathBuf>,
    pub llm: LlmConfig,
    pub perception: PerceptionConfig,
    pub executor: ExecutorConfig,
    /// Simulated seconds per wall-clock second while executing; 0 runs as
    /// fast as possible.
    pub realtime_factor: f64,
    pub heartbeat_ms: u64,
    /// Events kept per session for late subscribers.
    pub telemetry_history: usize,
    pub seed: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            token: None,
            map: "office".into(),
            data_dir: None,
            mock_llm: true,
            fixtures: None,
            llm: LlmConfig::default(),
            perception: PerceptionConfig::default(),
            executor: ExecutorConfig::default(),
            realtime_factor: 1.0,
            heartbeat_ms: 1000,
            telemetry_history: 4096,
            seed: 7,
        }
    }
}

impl GatewayConfig {
    /// Parse by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))
        }
    }

    /// Apply `BABELBOT_*` environment overrides.
    pub fn apply_env(&mut self) {
        self.apply_vars(|k| std::env::var(k).ok());
        self.llm.apply_env();
    }

    fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("BABELBOT_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("BABELBOT_TOKEN") {
            self.token = (!v.is_empty()).then_some(v);
        }
        if let Some(v) = get("BABELBOT_MAP") {
            self.map = v;
        }
        if let Some(v) = get("BABELBOT_DATA_DIR") {
            self.data_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("BABELBOT_MOCK_LLM") {
            self.mock_llm = !matches!(v.trim(), "0" | "false" | "no" | "off");
        }
    }

    pub fn load_map(&self) -> Result<MapFile, GatewayError> {
        load_map(&self.map)
    }
}

/// A bundled map by name, or a map file on disk.
pub fn load_map(name: &str) -> Result<MapFile, GatewayError> {
    if let Some(m) = bundled_map(name) {
        return Ok(m);
    }
    let text = std::fs::read_to_string(name)
        .map_err(|e| GatewayError::Config(format!("map {name}: {e}")))?;
    MapFile::parse(&text).map_err(|e| GatewayError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "map = \"open\"\nmock_llm = false\n[perception]\nsoftmax_temperature = 0.1\n",
        )
        .unwrap();
        let c = GatewayConfig::load(&t).unwrap();
        assert_eq!(c.map, "open");
        assert!(!c.mock_llm);
        assert_eq!(c.perception.softmax_temperature, 0.1);
        assert_eq!(c.perception.q_thresh, 0.6);

        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"heartbeat_ms": 250}"#).unwrap();
        let c = GatewayConfig::load(&j).unwrap();
        assert_eq!(c.heartbeat_ms, 250);
        assert_eq!(c.executor.goal_tolerance, 0.2);
    }

    #[test]
    fn env_overrides() {
        let mut c = GatewayConfig::default();
        c.apply_vars(|k| match k {
            "BABELBOT_MAP" => Some("open".into()),
            "BABELBOT_MOCK_LLM" => Some("0".into()),
            "BABELBOT_TOKEN" => Some("secret".into()),
            _ => None,
        });
        assert_eq!(c.map, "open");
        assert!(!c.mock_llm);
        assert_eq!(c.token.as_deref(), Some("secret"));
    }

    #[test]
    fn maps_by_name_or_path() {
        assert!(load_map("office").is_ok());
        assert!(matches!(load_map("/nonexistent.json"), Err(GatewayError::Config(_))));
    }
}
