use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use super::train::LogRow;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::ptf::{read_ptf_file, write_ptf_file, PtfTensor};

const MANIFEST: &str = "model.toml";

/// Structured-text description stored next to the layer tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub widths: Vec<usize>,
    pub seed: u64,
    pub train: TrainConfig,
}

fn layer_file(i: usize, what: &str) -> String {
    format!("layer{i}_{what}.ptf")
}

/// Writes `model.toml` plus one weight and one bias tensor per layer.
pub fn save_mlp(dir: impl AsRef<Path>, model: &Mlp<f32>, seed: u64, train: &TrainConfig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let manifest = ModelManifest {
        widths: model.widths(),
        seed,
        train: train.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::file(&path, e))?;
    for (i, layer) in model.layers().iter().enumerate() {
        write_ptf_file(dir.join(layer_file(i, "weight")), &PtfTensor::from_array_f32(&layer.weight))?;
        write_ptf_file(dir.join(layer_file(i, "bias")), &PtfTensor::from_array_f32(&layer.bias))?;
    }
    Ok(())
}

pub fn load_mlp(dir: impl AsRef<Path>) -> Result<(Mlp<f32>, ModelManifest)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let manifest: ModelManifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if manifest.widths.len() < 2 {
        return Err(Error::Config("model manifest needs at least two widths".into()));
    }
    let layers = manifest
        .widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let weight = read_ptf_file(dir.join(layer_file(i, "weight")))?
                .into_array_f32()?
                .into_dimensionality::<ndarray::Ix2>()
                .map_err(|_| Error::shape(format!("layer {i} weight must have 2 dims")))?;
            let bias = read_ptf_file(dir.join(layer_file(i, "bias")))?
                .into_array_f32()?
                .into_dimensionality::<ndarray::Ix1>()
                .map_err(|_| Error::shape(format!("layer {i} bias must have 1 dim")))?;
            if weight.dim() != (w[0], w[1]) {
                return Err(Error::shape(format!("layer {i} weight is {:?}", weight.dim())));
            }
            Ok(Dense::<f32> {
                weight: Array2::from(weight),
                bias: Array1::from(bias),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Mlp::from_layers(layers)?, manifest))
}

pub fn write_train_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn read_train_log(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
