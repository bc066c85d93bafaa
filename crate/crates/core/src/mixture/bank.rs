use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_gmm_em, log_sum_exp, EmOptions, Gaussian, Gmm};
use crate::error::{Error, Result};
use crate::ptf::{read_ptf_file, write_ptf_file, PtfTensor};

/// Samples whose best class log-density falls below this get a uniform label.
pub const SOFT_LABEL_FLOOR: f64 = -700.0;

const MANIFEST: &str = "gmm_bank.toml";

/// One density model per class over a shared feature space. Classes with no
/// confident samples carry `None` and are left out of soft-label
/// normalization.
#[derive(Debug, Clone)]
pub struct ClassGmmBank {
    dim: usize,
    classes: Vec<Option<Gmm>>,
}

impl ClassGmmBank {
    pub fn new(dim: usize, classes: Vec<Option<Gmm>>) -> Result<Self> {
        if classes.iter().flatten().any(|g| g.dim() != dim) {
            return Err(Error::shape("class models differ in dimension"));
        }
        Ok(Self { dim, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, k: usize) -> Option<&Gmm> {
        self.classes.get(k).and_then(Option::as_ref)
    }

    pub fn fitted_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_some())
            .map(|(k, _)| k)
    }
}

/// Fits one mixture per class on the rows of `features` listed in
/// `confident[k]`.
///
/// A class with fewer than `components * (q + 1)` samples is fitted with a
/// single component. A class with none is excluded. Every class fit starts
/// from the same seed drawn once from `rng`, so identical sample sets give
/// identical models.
pub fn fit_class_bank<R: Rng + ?Sized>(
    features: ArrayView2<'_, f64>,
    confident: &[Vec<usize>],
    opts: &EmOptions,
    rng: &mut R,
) -> Result<ClassGmmBank> {
    let q = features.ncols();
    let n = features.nrows();
    let seed: u64 = rng.random();
    let mut classes = Vec::with_capacity(confident.len());
    for (k, idx) in confident.iter().enumerate() {
        if idx.is_empty() {
            warn!("class {k} has no confident samples; excluded from soft labels");
            classes.push(None);
            continue;
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        let samples = features.select(Axis(0), idx);
        let mut class_opts = *opts;
        if idx.len() < opts.components * (q + 1) {
            class_opts.components = 1;
        }
        let mut class_rng = ChaCha8Rng::seed_from_u64(seed);
        let fit = fit_gmm_em(samples.view(), &class_opts, &mut class_rng)?;
        classes.push(Some(fit.gmm));
    }
    ClassGmmBank::new(q, classes)
}

/// Normalized class-conditional densities for each row of `xs`, computed in
/// log space. Excluded classes get probability 0; samples that are outliers
/// to every fitted class get a uniform distribution over fitted classes.
pub fn soft_labels(bank: &ClassGmmBank, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let fitted: Vec<usize> = bank.fitted_classes().collect();
    if fitted.is_empty() {
        return Err(Error::invalid("soft labels need at least one fitted class"));
    }
    if xs.ncols() != bank.dim {
        return Err(Error::shape(format!(
            "bank expects {} features, got {}",
            bank.dim,
            xs.ncols()
        )));
    }
    let xs = xs.as_standard_layout();
    let mut out = Array2::<f64>::zeros((xs.nrows(), bank.num_classes()));
    let mut logs = vec![0.0; fitted.len()];
    for (row, mut dst) in xs.rows().into_iter().zip(out.rows_mut()) {
        let x = row.as_slice().expect("standard layout");
        for (l, &k) in logs.iter_mut().zip(&fitted) {
            *l = bank.classes[k].as_ref().expect("fitted").log_density(x);
        }
        let best = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(best >= SOFT_LABEL_FLOOR) {
            let u = 1.0 / fitted.len() as f64;
            fitted.iter().for_each(|&k| dst[k] = u);
            continue;
        }
        let lse = log_sum_exp(logs.iter().copied());
        for (l, &k) in logs.iter().zip(&fitted) {
            dst[k] = (l - lse).exp();
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct BankManifest {
    num_classes: usize,
    dim: usize,
    /// Components per class; 0 marks an excluded class.
    components: Vec<usize>,
}

fn class_file(k: usize, what: &str) -> String {
    format!("gmm_class{k}_{what}.ptf")
}

impl ClassGmmBank {
    /// Writes a `gmm_bank.toml` manifest plus per-class weight, mean and
    /// covariance tensors. Parameters are stored as f32.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let manifest = BankManifest {
            num_classes: self.num_classes(),
            dim: self.dim,
            components: self.classes.iter().map(|g| g.as_ref().map_or(0, Gmm::len)).collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| Error::file(&path, e))?;

        let q = self.dim;
        for (k, gmm) in self.classes.iter().enumerate() {
            let Some(gmm) = gmm else { continue };
            let m = gmm.len();
            let comps = gmm.components();
            let weights = comps.iter().map(|c| c.weight() as f32).collect();
            let means = comps.iter().flat_map(|c| c.mean().iter().map(|&v| v as f32)).collect();
            // row-major [m][i][j]
            let covs = comps
                .iter()
                .flat_map(|c| {
                    (0..q).flat_map(move |i| (0..q).map(move |j| c.covariance()[(i, j)] as f32))
                })
                .collect();
            write_ptf_file(dir.join(class_file(k, "weights")), &PtfTensor::from_f32(vec![m], weights)?)?;
            write_ptf_file(dir.join(class_file(k, "means")), &PtfTensor::from_f32(vec![m, q], means)?)?;
            write_ptf_file(
                dir.join(class_file(k, "covariances")),
                &PtfTensor::from_f32(vec![m, q, q], covs)?,
            )?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let manifest: BankManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if manifest.components.len() != manifest.num_classes {
            return Err(Error::Config("bank manifest class count mismatch".into()));
        }
        let q = manifest.dim;
        let load = |k: usize, what: &str, dims: Vec<usize>| -> Result<Vec<f64>> {
            let t = read_ptf_file(dir.join(class_file(k, what)))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::shape(format!("class {k} {what}: dims {:?}", t.dims())));
            }
            Ok(t.into_array_f32()?.iter().map(|&v| v as f64).collect())
        };
        let mut classes = Vec::with_capacity(manifest.num_classes);
        for (k, &m) in manifest.components.iter().enumerate() {
            if m == 0 {
                classes.push(None);
                continue;
            }
            let w = load(k, "weights", vec![m])?;
            let mu = load(k, "means", vec![m, q])?;
            let cov = load(k, "covariances", vec![m, q, q])?;
            let comps = (0..m)
                .map(|c| {
                    let mean = DVector::from_column_slice(&mu[c * q..(c + 1) * q]);
                    let sigma = DMatrix::from_row_slice(q, q, &cov[c * q * q..(c + 1) * q * q]);
                    Gaussian::new(w[c], mean, sigma)
                })
                .collect::<Result<Vec<_>>>()?;
            classes.push(Some(Gmm::new(comps)?));
        }
        Self::new(q, classes)
    }
}
