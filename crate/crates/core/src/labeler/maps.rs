use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::ptf::{read_ptf_file, PtfTensor};

/// Label value marking unlabeled pixels.
pub const IGNORE: u16 = u16::MAX;

const PROB_SUM_TOL: f64 = 1e-5;

/// Class names with optional scoring prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
    aliases: BTreeMap<String, String>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        Self::with_aliases(names, BTreeMap::new())
    }

    pub fn with_aliases(names: Vec<String>, aliases: BTreeMap<String, String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("vocabulary needs at least one class"));
        }
        if names.len() >= IGNORE as usize {
            return Err(Error::invalid("too many classes for a u16 label map"));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate class name {n:?}")));
            }
        }
        if let Some(bad) = aliases.keys().find(|k| !names.contains(k)) {
            return Err(Error::invalid(format!("alias for unknown class {bad:?}")));
        }
        Ok(Self { names, aliases })
    }

    /// Reads `classes.txt` and, when present, `aliases.txt` (`name<TAB>prompt`).
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let classes = dir.join("classes.txt");
        let text = std::fs::read_to_string(&classes).map_err(|e| Error::file(&classes, e))?;
        let names = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        let mut aliases = BTreeMap::new();
        let alias_path = dir.join("aliases.txt");
        if alias_path.exists() {
            let text =
                std::fs::read_to_string(&alias_path).map_err(|e| Error::file(&alias_path, e))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let (name, prompt) = line.split_once('\t').ok_or_else(|| {
                    Error::invalid(format!("aliases.txt: expected name<TAB>prompt, got {line:?}"))
                })?;
                aliases.insert(name.to_owned(), prompt.to_owned());
            }
        }
        Self::with_aliases(names, aliases)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    /// Text used when scoring class `k`: its alias if set, else its name.
    pub fn prompt(&self, k: usize) -> &str {
        let name = &self.names[k];
        self.aliases.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn classes_txt(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }

    pub fn aliases_txt(&self) -> String {
        self.aliases
            .iter()
            .map(|(n, p)| format!("{n}\t{p}\n"))
            .collect()
    }
}

/// Raw per-pixel class scores `[H][W][K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap(Array3<f32>);

impl ScoreMap {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("score map contains non-finite values"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.0
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.0.dim()
    }
}

/// Per-pixel class probabilities `[H][W][K]`, each pixel summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Array3<f32>);

impl ProbMap {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        for (i, px) in values.lanes(Axis(2)).into_iter().enumerate() {
            if px.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::invalid(format!("pixel {i}: negative or NaN probability")));
            }
            let s: f64 = px.iter().map(|&p| p as f64).sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::invalid(format!("pixel {i}: probabilities sum to {s}")));
            }
        }
        Ok(Self(values))
    }

    pub(crate) fn from_normalized(values: Array3<f32>) -> Self {
        debug_assert!(Self::new(values.clone()).is_ok());
        Self(values)
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.0
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.0.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.0.dim().2
    }

    pub fn to_ptf(&self) -> PtfTensor {
        PtfTensor::from_array_f32(&self.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let arr = read_ptf_file(path)?
            .into_array_f32()?
            .into_dimensionality::<ndarray::Ix3>()
            .map_err(|_| Error::shape("probability map must have 3 dims"))?;
        Self::new(arr)
    }
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap(Array2<f32>);

impl ConfidenceMap {
    pub fn new(values: Array2<f32>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("confidence values must lie in [0, 1]"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn to_ptf(&self) -> PtfTensor {
        PtfTensor::from_array_f32(&self.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let arr = read_ptf_file(path)?
            .into_array_f32()?
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|_| Error::shape("confidence map must have 2 dims"))?;
        Self::new(arr)
    }
}

/// Per-pixel class indices; [`IGNORE`] marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap(Array2<u16>);

impl LabelMap {
    pub fn new(values: Array2<u16>, num_classes: usize) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v != IGNORE && v as usize >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self(values))
    }

    /// Wraps labels without a class-count check.
    pub fn from_raw(values: Array2<u16>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &Array2<u16> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Largest non-ignore label plus one (0 for an all-ignore map).
    pub fn inferred_classes(&self) -> usize {
        self.0
            .iter()
            .filter(|&&v| v != IGNORE)
            .map(|&v| v as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn to_ptf(&self) -> PtfTensor {
        PtfTensor::from_array_u16(&self.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let arr = read_ptf_file(path)?
            .into_array_u16()?
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|_| Error::shape("label map must have 2 dims"))?;
        Ok(Self(arr))
    }
}

/// Upsampling factors for multi-scale fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet(Vec<f32>);

impl ScaleSet {
    pub fn new(factors: Vec<f32>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("scale set is empty"));
        }
        if let Some(bad) = factors.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!("scale factor {bad} must be positive")));
        }
        Ok(Self(factors))
    }

    pub fn factors(&self) -> &[f32] {
        &self.0
    }
}
