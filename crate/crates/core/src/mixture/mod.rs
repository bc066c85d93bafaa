//! Spectral density modelling: PCA reduction, EM-fitted Gaussian mixtures,
//! confident/hard splitting of predictions and soft-label generation.

mod bank;
mod gmm;
mod pca;
mod split;

pub use bank::{fit_class_bank, soft_labels, ClassGmmBank, SOFT_LABEL_FLOOR};
pub use gmm::{fit_gmm_em, EmOptions, Gaussian, Gmm, GmmFit};
pub use pca::{fit_pca, PcaModel};
pub use split::{split_confidence, ClassSplit, ConfidenceSplit, SplitOptions};

use serde::{Deserialize, Serialize};

/// Settings for the class-conditional density model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// PCA dimensions kept (clipped to the band count).
    pub pca_dims: usize,
    /// Gaussian components per class.
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Ridge added to class covariances.
    pub reg: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            pca_dims: 8,
            components: 2,
            max_iter: 100,
            tol: 1e-6,
            reg: 1e-4,
        }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.pca_dims == 0 || self.components == 0 || self.max_iter == 0 {
            return Err(crate::Error::Config(
                "mixture: pca_dims, components and max_iter must be positive".into(),
            ));
        }
        if !(self.tol > 0.0 && self.reg > 0.0 && self.tol.is_finite() && self.reg.is_finite()) {
            return Err(crate::Error::Config("mixture: tol and reg must be positive".into()));
        }
        Ok(())
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            components: self.components,
            max_iter: self.max_iter,
            tol: self.tol,
            reg: self.reg,
        }
    }
}
