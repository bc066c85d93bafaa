//! Noise-robust training of a per-pixel spectral classifier on pseudo-labels.

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod sampler;
mod schedule;
mod train;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_mlp, read_train_log, save_mlp, write_train_log, ModelManifest};
pub use loss::{composite_loss, cross_entropy_soft, LossTerms, LossWeights, Segments, PROB_FLOOR};
pub use mlp::{softmax_rows, Dense, Mlp, MlpCache, SpectralClassifier};
pub use sampler::{sample_random_set, RandomBatch, RandomSetSampler, SAMPLE_WEIGHT_FLOOR};
pub use schedule::cosine_lr;
pub use train::{
    build_training_sets, objective_gradients, predict_map, predict_rows, train_spectral, LogRow, SoftSet,
    SpectralTrainer, TrainReport, TrainingSets,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iters_per_epoch: usize,
    /// Random-set draws per class; also the confident and hard batch sizes.
    pub n_per_class: usize,
    pub lr0: f64,
    pub eta_min: f64,
    pub warmup_fraction: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub noise_std: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub sample_floor: f64,
    /// Hidden layer widths of the default classifier.
    pub hidden: Vec<usize>,
    /// False runs the warmup loss for the whole schedule.
    pub refine: bool,
    pub rebuild_sets_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            iters_per_epoch: 20,
            n_per_class: 64,
            lr0: 1e-3,
            eta_min: 1e-5,
            warmup_fraction: 0.5,
            lambda1: 1.0,
            lambda2: 0.5,
            noise_std: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            sample_floor: SAMPLE_WEIGHT_FLOOR,
            hidden: vec![128, 128],
            refine: true,
            rebuild_sets_each_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train: {msg}")));
        if self.epochs == 0 || self.iters_per_epoch == 0 {
            return bad("epochs and iters_per_epoch must be positive");
        }
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must lie in (0, 1)");
        }
        if !(self.eta_min > 0.0 && self.lr0 >= self.eta_min && self.lr0.is_finite()) {
            return bad("need lr0 >= eta_min > 0");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return bad("lambda1 and lambda2 must be finite and non-negative");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return bad("need 0 <= beta < 1 and adam_eps > 0");
        }
        if !(self.sample_floor >= 0.0 && self.sample_floor.is_finite()) {
            return bad("sample_floor must be finite and non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iters_per_epoch
    }

    /// Iterations run with the warmup loss.
    pub fn warmup_iterations(&self) -> usize {
        let total = self.total_iterations();
        if self.refine {
            ((self.warmup_fraction * total as f64).round() as usize).min(total)
        } else {
            total
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            confident: self.lambda1,
            hard: self.lambda2,
        }
    }

    /// Layer widths `[bands, hidden.., classes]`.
    pub fn widths(&self, bands: usize, classes: usize) -> Vec<usize> {
        let mut w = vec![bands];
        w.extend(&self.hidden);
        w.push(classes);
        w
    }
}
