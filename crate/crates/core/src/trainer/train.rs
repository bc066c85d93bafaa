use log::{debug, info};
use ndarray::{s, Array2, Array3, ArrayView2, Axis, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{composite_loss, LossTerms, LossWeights, Segments};
use super::mlp::SpectralClassifier;
use super::sampler::{RandomBatch, RandomSetSampler};
use super::schedule::cosine_lr;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::labeler::{ConfidenceMap, LabelMap, ProbMap};
use crate::mixture::{fit_class_bank, fit_pca, soft_labels, split_confidence, ClassGmmBank, EmOptions, MixtureConfig, PcaModel, SplitOptions};
use crate::prep::{add_gaussian_noise, HsiCube};

const PREDICT_CHUNK: usize = 4096;

/// Reshapes row predictions back into a `[H][W][K]` grid.
fn rows_to_grid(rows: Array2<f32>, h: usize, w: usize) -> Result<Array3<f32>> {
    let k = rows.ncols();
    rows.into_shape_with_order((h, w, k)).map_err(|e| Error::shape(e.to_string()))
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss_r: f64,
    pub loss_c: f64,
    pub loss_h: f64,
    pub total: f64,
}

/// Pixel indices with soft targets `[n][K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSet {
    pub indices: Vec<usize>,
    pub targets: Array2<f32>,
}

impl SoftSet {
    pub fn empty(classes: usize) -> Self {
        Self {
            indices: Vec::new(),
            targets: Array2::zeros((0, classes)),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Confident and hard sets for refinement. The random set is redrawn from
/// the original pseudo-labels every step and lives in the sampler.
#[derive(Debug, Clone)]
pub struct TrainingSets {
    pub confident: SoftSet,
    pub hard: SoftSet,
    /// Classes whose split fell back to all-confident.
    pub fallback_classes: Vec<usize>,
    pub bank: Option<ClassGmmBank>,
}

impl TrainingSets {
    pub fn empty(classes: usize) -> Self {
        Self {
            confident: SoftSet::empty(classes),
            hard: SoftSet::empty(classes),
            fallback_classes: Vec::new(),
            bank: None,
        }
    }
}

/// Loss terms and per-tensor parameter gradients of the three-set objective
/// on one stacked batch.
pub fn objective_gradients<F: NdFloat, M: SpectralClassifier<F>>(
    model: &M,
    batch: ArrayView2<'_, F>,
    targets: ArrayView2<'_, F>,
    segments: Segments,
    weights: LossWeights,
) -> Result<(LossTerms, Vec<Vec<F>>)> {
    let (probs, cache) = model.forward(batch)?;
    let (terms, dscores) = composite_loss(probs.view(), targets, segments, weights)?;
    Ok((terms, model.backward(&cache, dscores.view())))
}

/// Class probabilities for each row of `pixels`, evaluated in chunks.
pub fn predict_rows<M: SpectralClassifier<f32>>(model: &M, pixels: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
    let mut out = Array2::<f32>::zeros((pixels.nrows(), model.num_classes()));
    for start in (0..pixels.nrows()).step_by(PREDICT_CHUNK) {
        let end = (start + PREDICT_CHUNK).min(pixels.nrows());
        let (p, _) = model.forward(pixels.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&p);
    }
    Ok(out)
}

/// Per-pixel class probabilities over a (normalized) cube, without noise.
pub fn predict_map<M: SpectralClassifier<f32>>(model: &M, cube: &HsiCube) -> Result<ProbMap> {
    if cube.bands() != model.input_dim() {
        return Err(Error::shape(format!(
            "model expects {} bands, cube has {}",
            model.input_dim(),
            cube.bands()
        )));
    }
    let probs = predict_rows(model, cube.pixels())?;
    ProbMap::new(rows_to_grid(probs, cube.height(), cube.width())?)
}

fn row_margin(row: ndarray::ArrayView1<'_, f32>) -> (usize, f64) {
    if row.len() == 1 {
        return (0, 1.0);
    }
    let (mut best, mut bk, mut second) = (f32::NEG_INFINITY, 0, f32::NEG_INFINITY);
    for (k, &p) in row.iter().enumerate() {
        if p > best {
            second = best;
            best = p;
            bk = k;
        } else if p > second {
            second = p;
        }
    }
    (bk, ((best - second) as f64).clamp(0.0, 1.0))
}

/// Splits pixels into confident and hard sets from the current model's
/// margins and attaches mixture-based soft labels.
///
/// Predictions are taken from `model` on `pixels`; each predicted class is
/// split by a 1-D mixture over its margins; one density model per class is
/// fitted on the PCA features of its confident pixels; soft labels come from
/// the normalized class densities.
pub fn build_training_sets<M: SpectralClassifier<f32>, R: Rng + ?Sized>(
    model: &M,
    pixels: ArrayView2<'_, f32>,
    pca: &PcaModel,
    split: &SplitOptions,
    em: &EmOptions,
    rng: &mut R,
) -> Result<TrainingSets> {
    let k = model.num_classes();
    let probs = predict_rows(model, pixels)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut margins: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (i, row) in probs.rows().into_iter().enumerate() {
        let (c, m) = row_margin(row);
        members[c].push(i);
        margins[c].push(m);
    }
    let parts = split_confidence(&margins, split, rng)?;
    let mut confident_by_class = vec![Vec::new(); k];
    let mut hard_idx = Vec::new();
    let mut fallback_classes = Vec::new();
    for (c, part) in parts.classes.iter().enumerate() {
        confident_by_class[c] = part.confident.iter().map(|&j| members[c][j]).collect();
        hard_idx.extend(part.hard.iter().map(|&j| members[c][j]));
        if part.fallback && !members[c].is_empty() {
            fallback_classes.push(c);
        }
    }
    let features = pca.project_rows(pixels.mapv(f64::from).view())?;
    let bank = fit_class_bank(features.view(), &confident_by_class, em, rng)?;
    let confident_idx: Vec<usize> = confident_by_class.concat();
    let soft = |idx: &[usize]| -> Result<SoftSet> {
        if idx.is_empty() {
            return Ok(SoftSet::empty(k));
        }
        let t = soft_labels(&bank, features.select(Axis(0), idx).view())?;
        Ok(SoftSet {
            indices: idx.to_vec(),
            targets: t.mapv(|v| v as f32),
        })
    };
    let confident = soft(&confident_idx)?;
    let hard = soft(&hard_idx)?;
    debug!(
        "training sets: {} confident, {} hard, fallback classes {:?}",
        confident.len(),
        hard.len(),
        fallback_classes
    );
    Ok(TrainingSets {
        confident,
        hard,
        fallback_classes,
        bank: Some(bank),
    })
}

/// Owns the model and optimizer state across warmup and refinement so the
/// learning-rate schedule and Adam moments continue seamlessly.
#[derive(Debug, Clone)]
pub struct SpectralTrainer<M> {
    model: M,
    adam: AdamState<f32>,
    iteration: usize,
    cfg: TrainConfig,
    log: Vec<LogRow>,
}

impl<M: SpectralClassifier<f32>> SpectralTrainer<M> {
    pub fn new(model: M, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            adam: AdamState::new(cfg.beta1, cfg.beta2, cfg.adam_eps),
            iteration: 0,
            cfg: cfg.clone(),
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn check_pixels(&self, pixels: ArrayView2<'_, f32>) -> Result<()> {
        if pixels.ncols() != self.model.input_dim() {
            return Err(Error::shape(format!(
                "model expects {} bands, got {}",
                self.model.input_dim(),
                pixels.ncols()
            )));
        }
        Ok(())
    }

    fn step<R: Rng + ?Sized>(
        &mut self,
        mut batch: Array2<f32>,
        targets: Array2<f32>,
        segments: Segments,
        rng: &mut R,
    ) -> Result<LossTerms> {
        add_gaussian_noise(batch.view_mut(), self.cfg.noise_std as f32, rng)?;
        let (terms, grads) =
            objective_gradients(&self.model, batch.view(), targets.view(), segments, self.cfg.loss_weights())?;
        let lr = cosine_lr(self.iteration, self.cfg.total_iterations(), self.cfg.lr0, self.cfg.eta_min);
        adam_step(&mut self.model.parameters_mut(), &grads, &mut self.adam, lr)?;
        self.log.push(LogRow {
            iteration: self.iteration,
            lr,
            loss_r: terms.random,
            loss_c: terms.confident,
            loss_h: terms.hard,
            total: terms.total,
        });
        self.iteration += 1;
        Ok(terms)
    }

    fn random_part(&self, pixels: ArrayView2<'_, f32>, draw: &RandomBatch) -> (Array2<f32>, Array2<f32>) {
        let k = self.model.num_classes();
        let x = pixels.select(Axis(0), &draw.indices);
        let mut t = Array2::<f32>::zeros((draw.len(), k));
        for (i, &l) in draw.labels.iter().enumerate() {
            t[[i, l as usize]] = 1.0;
        }
        (x, t)
    }

    /// Runs warmup iterations (one-hot pseudo-label cross-entropy on a fresh
    /// random set) until the warmup share of the schedule is used up.
    pub fn warmup_train<R: Rng + ?Sized>(
        &mut self,
        pixels: ArrayView2<'_, f32>,
        sampler: &RandomSetSampler,
        rng: &mut R,
    ) -> Result<()> {
        self.check_pixels(pixels)?;
        if sampler.classes().iter().any(|&c| c as usize >= self.model.num_classes()) {
            return Err(Error::invalid("pseudo-labels exceed the model's class count"));
        }
        while self.iteration < self.cfg.warmup_iterations() {
            let draw = sampler.sample(rng);
            let (x, t) = self.random_part(pixels, &draw);
            let seg = Segments {
                random: x.nrows(),
                confident: 0,
                hard: 0,
            };
            self.step(x, t, seg, rng)?;
        }
        Ok(())
    }

    /// Runs up to `steps` refinement iterations of the three-set objective,
    /// stopping at the end of the schedule. Returns the number run.
    pub fn refine_steps<R: Rng + ?Sized>(
        &mut self,
        pixels: ArrayView2<'_, f32>,
        sampler: &RandomSetSampler,
        sets: &TrainingSets,
        steps: usize,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_pixels(pixels)?;
        let k = self.model.num_classes();
        if sets.confident.targets.ncols() != k || sets.hard.targets.ncols() != k {
            return Err(Error::shape("soft targets do not match the model's class count"));
        }
        let n = pixels.nrows();
        if sets.confident.indices.iter().chain(&sets.hard.indices).any(|&i| i >= n) {
            return Err(Error::invalid("training set index out of range"));
        }
        let use_c = self.cfg.lambda1 > 0.0 && !sets.confident.is_empty();
        let use_h = self.cfg.lambda2 > 0.0 && !sets.hard.is_empty();
        let m = self.cfg.n_per_class;
        let end = self.iteration.saturating_add(steps).min(self.cfg.total_iterations());
        let start = self.iteration;
        while self.iteration < end {
            let draw = sampler.sample(rng);
            let (xr, tr) = self.random_part(pixels, &draw);
            let mut rows = vec![xr];
            let mut targets = vec![tr];
            let mut seg = Segments {
                random: draw.len(),
                confident: 0,
                hard: 0,
            };
            for (used, set, count) in [(use_c, &sets.confident, &mut seg.confident), (use_h, &sets.hard, &mut seg.hard)] {
                if !used {
                    continue;
                }
                let pick: Vec<usize> = (0..m).map(|_| rng.random_range(0..set.len())).collect();
                let idx: Vec<usize> = pick.iter().map(|&j| set.indices[j]).collect();
                rows.push(pixels.select(Axis(0), &idx));
                targets.push(set.targets.select(Axis(0), &pick));
                *count = m;
            }
            let x = ndarray::concatenate(Axis(0), &rows.iter().map(|a| a.view()).collect::<Vec<_>>())
                .map_err(|e| Error::shape(e.to_string()))?;
            let t = ndarray::concatenate(Axis(0), &targets.iter().map(|a| a.view()).collect::<Vec<_>>())
                .map_err(|e| Error::shape(e.to_string()))?;
            self.step(x, t, seg, rng)?;
        }
        Ok(self.iteration - start)
    }

    /// Refinement for the rest of the schedule on fixed sets.
    pub fn refine_train<R: Rng + ?Sized>(
        &mut self,
        pixels: ArrayView2<'_, f32>,
        sampler: &RandomSetSampler,
        sets: &TrainingSets,
        rng: &mut R,
    ) -> Result<()> {
        let remaining = self.cfg.total_iterations().saturating_sub(self.iteration);
        self.refine_steps(pixels, sampler, sets, remaining, rng)?;
        Ok(())
    }
}

/// Result of a full warmup plus refinement run.
#[derive(Debug, Clone)]
pub struct TrainReport<M> {
    pub model: M,
    /// Snapshot taken when warmup ended.
    pub warmup_model: M,
    pub log: Vec<LogRow>,
    /// Sets used by the last refinement stretch, if refinement ran.
    pub sets: Option<TrainingSets>,
}

/// Warmup on the pseudo-labels, then refinement with confident and hard
/// sets built from the warmed-up model.
///
/// `pixels` are normalized spectra in row-major pixel order matching
/// `pseudo` and `conf`. Training steps and set construction draw from two
/// independent streams seeded from `rng`, so disabling the confident and
/// hard terms reproduces plain warmup training exactly.
pub fn train_spectral<M, R>(
    model: M,
    pixels: ArrayView2<'_, f32>,
    pseudo: &LabelMap,
    conf: &ConfidenceMap,
    cfg: &TrainConfig,
    mixture: &MixtureConfig,
    rng: &mut R,
) -> Result<TrainReport<M>>
where
    M: SpectralClassifier<f32> + Clone,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    mixture.validate()?;
    let (h, w) = pseudo.dim();
    if h * w != pixels.nrows() {
        return Err(Error::shape(format!("{} pixels vs {h}x{w} label map", pixels.nrows())));
    }
    let mut step_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut set_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let sampler = RandomSetSampler::new(pseudo, conf, cfg.n_per_class, cfg.sample_floor)?;
    let mut trainer = SpectralTrainer::new(model, cfg)?;
    trainer.warmup_train(pixels, &sampler, &mut step_rng)?;
    let warmup_model = trainer.model().clone();
    info!("warmup finished after {} iterations", trainer.iteration());

    let mut last_sets = None;
    if trainer.iteration() < cfg.total_iterations() {
        let k = trainer.model().num_classes();
        let needs_sets = cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;
        let pca = if needs_sets {
            let q = mixture.pca_dims.min(pixels.ncols());
            Some(fit_pca(pixels.mapv(f64::from).view(), q)?)
        } else {
            None
        };
        let split = SplitOptions::default();
        let em = mixture.em_options();
        let build = |m: &M, r: &mut ChaCha8Rng| match &pca {
            Some(p) => build_training_sets(m, pixels, p, &split, &em, r),
            None => Ok(TrainingSets::empty(k)),
        };
        let mut sets = build(trainer.model(), &mut set_rng)?;
        info!(
            "refinement sets: {} confident, {} hard",
            sets.confident.len(),
            sets.hard.len()
        );
        while trainer.iteration() < cfg.total_iterations() {
            let steps = if cfg.rebuild_sets_each_epoch {
                cfg.iters_per_epoch - trainer.iteration() % cfg.iters_per_epoch
            } else {
                usize::MAX
            };
            trainer.refine_steps(pixels, &sampler, &sets, steps, &mut step_rng)?;
            if trainer.iteration() < cfg.total_iterations() {
                sets = build(trainer.model(), &mut set_rng)?;
            }
        }
        last_sets = Some(sets);
    }
    let log = trainer.log().to_vec();
    Ok(TrainReport {
        model: trainer.into_model(),
        warmup_model,
        log,
        sets: last_sets,
    })
}
