//! Declarative pipeline configuration with dotted-key overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::{ScaleSet, DEFAULT_TAU};
use crate::mixture::MixtureConfig;
use crate::synthetic::SceneConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Cube tensor `[H][W][B]`.
    pub cube: Option<PathBuf>,
    /// One wavelength per line, in nm.
    pub wavelengths: Option<PathBuf>,
    /// Ground-truth label tensor `[H][W]`.
    pub gt: Option<PathBuf>,
    /// Directory of `scores_s{factor}.ptf` files.
    pub scores: Option<PathBuf>,
    /// Label map evaluated by `eval`; defaults to the trained prediction.
    pub prediction: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabularyConfig {
    /// Class names in label order. Empty means "take them from the scores
    /// directory" (or generic names for a synthetic scene).
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoConfig {
    pub scales: Vec<f32>,
    pub window: usize,
    pub stride: usize,
    pub tau: f32,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 2.0],
            window: 224,
            stride: 112,
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub enabled: bool,
    pub flip_prob: f32,
    pub sharpness: f32,
    pub scene: SceneConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            flip_prob: 0.3,
            sharpness: 5.0,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub vocabulary: VocabularyConfig,
    /// Prompt text per class name, e.g. `Water = "River or lake"`.
    pub alias: BTreeMap<String, String>,
    pub pseudo: PseudoConfig,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub mixture: MixtureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: PathsConfig {
                out: PathBuf::from("out"),
                ..PathsConfig::default()
            },
            vocabulary: VocabularyConfig::default(),
            alias: BTreeMap::new(),
            pseudo: PseudoConfig::default(),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            mixture: MixtureConfig::default(),
        }
    }
}

/// Parses a command-line value as a TOML value, falling back to a plain
/// string for bare words such as paths.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `key` (dotted path) in `table`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

impl PipelineConfig {
    /// Builds a config from optional TOML text plus `(dotted key, value)`
    /// overrides applied in order.
    pub fn from_toml_with_overrides(text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match text {
            Some(t) => t.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_dotted(&mut table, k, v)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?),
            None => None,
        };
        Self::from_toml_with_overrides(text.as_deref(), overrides)
    }

    /// Checks numeric ranges; path existence is checked by each stage.
    pub fn validate(&self) -> Result<()> {
        ScaleSet::new(self.pseudo.scales.clone()).map_err(|e| Error::Config(format!("pseudo.scales: {e}")))?;
        if self.pseudo.window == 0 || self.pseudo.stride == 0 {
            return Err(Error::Config("pseudo: window and stride must be positive".into()));
        }
        if !(self.pseudo.tau > 0.0 && self.pseudo.tau.is_finite()) {
            return Err(Error::Config("pseudo.tau must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.synthetic.flip_prob) || !(self.synthetic.sharpness > 0.0) {
            return Err(Error::Config("synthetic: need flip_prob in [0, 1] and sharpness > 0".into()));
        }
        self.train.validate()?;
        self.mixture.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml_with_overrides(Some(&text), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.pseudo.scales, vec![1.0, 2.0]);
        assert_eq!((cfg.pseudo.window, cfg.pseudo.stride), (224, 112));
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
            seed = 7
            [vocabulary]
            classes = ["Water", "Trees"]
            [alias]
            Water = "River or lake"
            [train]
            lambda2 = 0.25
        "#;
        let overrides = vec![
            ("train.lambda2".to_string(), "0.75".to_string()),
            ("pseudo.scales".to_string(), "[1.0]".to_string()),
            ("paths.out".to_string(), "/tmp/run one".to_string()),
            ("synthetic.scene.height".to_string(), "32".to_string()),
        ];
        let cfg = PipelineConfig::from_toml_with_overrides(Some(text), &overrides).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.lambda2, 0.75);
        assert_eq!(cfg.pseudo.scales, vec![1.0]);
        assert_eq!(cfg.paths.out, PathBuf::from("/tmp/run one"));
        assert_eq!(cfg.synthetic.scene.height, 32);
        assert_eq!(cfg.alias["Water"], "River or lake");
    }

    #[test]
    fn unknown_keys_and_bad_ranges_rejected() {
        let bad_key = [("train.lamda1".to_string(), "1".to_string())];
        assert!(PipelineConfig::from_toml_with_overrides(None, &bad_key).is_err());
        let bad_value = [("train.warmup_fraction".to_string(), "1.5".to_string())];
        assert!(PipelineConfig::from_toml_with_overrides(None, &bad_value).is_err());
        let not_section = [("seed.x".to_string(), "1".to_string())];
        let mut t = toml::Table::new();
        t.insert("seed".into(), toml::Value::Integer(1));
        assert!(set_dotted(&mut t, &not_section[0].0, "1").is_err());
    }
}
