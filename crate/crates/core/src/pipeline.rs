//! Stage-wise pipeline: pseudo-labels, spectral training, evaluation and
//! rendering, all driven by one [`PipelineConfig`] and writing into one
//! output directory.

use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{confusion, default_palette, metrics, render_map_file, render_rgb_file, MetricsReport};
use crate::labeler::{
    argmax_labels, bvsb, fused_score, make_synthetic_scorer, ClassVocabulary, ConfidenceMap, DenseScorer,
    FileScorer, LabelMap, ProbMap, ScaleSet,
};
use crate::prep::{format_wavelengths, interpolate_rgb, normalize_spectra, HsiCube};
use crate::ptf::{write_ptf_file, PtfTensor};
use crate::synthetic::generate_scene;
use crate::trainer::{predict_map, save_mlp, train_spectral, write_train_log, LogRow, Mlp};

/// File names inside the output directory.
pub mod files {
    pub const CONFIG_ECHO: &str = "config.resolved.toml";
    pub const SCENE_CUBE: &str = "scene_cube.ptf";
    pub const SCENE_WAVELENGTHS: &str = "scene_wavelengths.txt";
    pub const SCENE_GT: &str = "scene_gt.ptf";
    pub const CLASSES: &str = "classes.txt";
    pub const ALIASES: &str = "aliases.txt";
    pub const RGB_PREVIEW: &str = "rgb_proxy.png";
    pub const PSEUDO_PROBS: &str = "pseudo_probs.ptf";
    pub const PSEUDO_LABELS: &str = "pseudo_labels.ptf";
    pub const PSEUDO_CONFIDENCE: &str = "pseudo_confidence.ptf";
    pub const PSEUDO_PNG: &str = "pseudo_labels.png";
    pub const PSEUDO_METRICS: &str = "pseudo_metrics.txt";
    pub const MODEL_DIR: &str = "model";
    pub const NORMALIZATION: &str = "normalization.ptf";
    pub const TRAIN_LOG: &str = "train_log.csv";
    pub const WARMUP_LABELS: &str = "warmup_labels.ptf";
    pub const PRED_PROBS: &str = "pred_probs.ptf";
    pub const PRED_LABELS: &str = "pred_labels.ptf";
    pub const PRED_PNG: &str = "pred_labels.png";
    pub const METRICS_TXT: &str = "metrics.txt";
    pub const METRICS_CSV: &str = "metrics.csv";
    pub const RENDER_DIR: &str = "render";
}

const STREAM_SCENE: u64 = 1;
const STREAM_SCORER: u64 = 2;
const STREAM_TRAIN: u64 = 3;

/// Independent, reproducible random stream per pipeline stage.
pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cube, optional ground truth and vocabulary for a run.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub cube: HsiCube,
    pub gt: Option<LabelMap>,
    pub vocab: ClassVocabulary,
}

fn vocabulary(cfg: &PipelineConfig, synthetic_classes: Option<usize>) -> Result<ClassVocabulary> {
    let names = if !cfg.vocabulary.classes.is_empty() {
        cfg.vocabulary.classes.clone()
    } else if let (false, Some(dir)) = (cfg.synthetic.enabled, &cfg.paths.scores) {
        let from_dir = ClassVocabulary::load_dir(dir)?;
        let mut aliases = from_dir.aliases().clone();
        aliases.extend(cfg.alias.clone());
        return ClassVocabulary::with_aliases(from_dir.names().to_vec(), aliases);
    } else if let Some(k) = synthetic_classes {
        (0..k).map(|i| format!("class{i}")).collect()
    } else {
        return Err(Error::Config(
            "no class names: set vocabulary.classes or paths.scores".into(),
        ));
    };
    if let Some(k) = synthetic_classes {
        if names.len() != k {
            return Err(Error::Config(format!(
                "vocabulary has {} classes, synthetic scene has {k}",
                names.len()
            )));
        }
    }
    ClassVocabulary::with_aliases(names, cfg.alias.clone())
}

fn require(path: &Option<PathBuf>, key: &str, missing: &mut Vec<String>) -> Option<PathBuf> {
    match path {
        Some(p) if p.exists() => Some(p.clone()),
        Some(p) => {
            missing.push(format!("{key} = {}", p.display()));
            None
        }
        None => {
            missing.push(format!("{key} (not set)"));
            None
        }
    }
}

/// Generates the synthetic scene or loads the configured cube and labels.
pub fn resolve_scene(cfg: &PipelineConfig) -> Result<SceneInputs> {
    if cfg.synthetic.enabled {
        let scene = generate_scene(&cfg.synthetic.scene, &mut stage_rng(cfg.seed, STREAM_SCENE))?;
        let vocab = vocabulary(cfg, Some(cfg.synthetic.scene.classes))?;
        return Ok(SceneInputs {
            cube: scene.cube,
            gt: Some(scene.gt),
            vocab,
        });
    }
    let mut missing = Vec::new();
    let cube = require(&cfg.paths.cube, "paths.cube", &mut missing);
    let wl = require(&cfg.paths.wavelengths, "paths.wavelengths", &mut missing);
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing.join(", ")));
    }
    let cube = HsiCube::load(cube.expect("checked"), wl.expect("checked"))?;
    let gt = match &cfg.paths.gt {
        Some(p) if p.exists() => Some(LabelMap::load(p)?),
        Some(p) => {
            warn!("ground truth {} not found", p.display());
            None
        }
        None => None,
    };
    if let Some(g) = &gt {
        if g.dim() != (cube.height(), cube.width()) {
            return Err(Error::shape(format!(
                "ground truth {:?} vs cube {}x{}",
                g.dim(),
                cube.height(),
                cube.width()
            )));
        }
    }
    Ok(SceneInputs {
        cube,
        gt,
        vocab: vocabulary(cfg, None)?,
    })
}

fn ensure_writable(out: &Path, names: &[&str], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let existing: Vec<String> = names
        .iter()
        .map(|n| out.join(n))
        .filter(|p| p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if existing.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "outputs already exist (rerun with --force to overwrite): {}",
            existing.join(", ")
        )))
    }
}

fn prepare_out(cfg: &PipelineConfig) -> Result<PathBuf> {
    let out = cfg.paths.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    let echo = out.join(files::CONFIG_ECHO);
    std::fs::write(&echo, cfg.to_toml()?).map_err(|e| Error::file(&echo, e))?;
    Ok(out)
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
}

fn evaluate(pred: &LabelMap, gt: &LabelMap, k: usize) -> Result<MetricsReport> {
    metrics(&confusion(pred, gt, k)?)
}

/// Uniform-margin confidence for single-class vocabularies.
fn confidence_of(probs: &ProbMap) -> Result<ConfidenceMap> {
    if probs.num_classes() < 2 {
        let (h, w, _) = probs.dim();
        return ConfidenceMap::new(Array2::ones((h, w)));
    }
    bvsb(probs)
}

/// Fused pseudo-labels of a run.
#[derive(Debug, Clone)]
pub struct PseudoOutcome {
    pub probs: ProbMap,
    pub labels: LabelMap,
    pub confidence: ConfidenceMap,
    /// Agreement with ground truth, when available.
    pub metrics: Option<MetricsReport>,
}

const PSEUDO_OUTPUTS: [&str; 6] = [
    files::PSEUDO_PROBS,
    files::PSEUDO_LABELS,
    files::PSEUDO_CONFIDENCE,
    files::PSEUDO_PNG,
    files::RGB_PREVIEW,
    files::PSEUDO_METRICS,
];

/// Scores the false-color proxy at every configured scale and writes fused
/// probabilities, hard labels, confidence and previews.
pub fn cmd_pseudo(cfg: &PipelineConfig, force: bool) -> Result<PseudoOutcome> {
    run_pseudo(cfg, force).map_err(|e| e.in_stage("pseudo"))
}

fn run_pseudo(cfg: &PipelineConfig, force: bool) -> Result<PseudoOutcome> {
    cfg.validate()?;
    ensure_writable(&cfg.paths.out, &PSEUDO_OUTPUTS, force)?;
    let scales = ScaleSet::new(cfg.pseudo.scales.clone())?;
    let scene = resolve_scene(cfg)?;
    let scorer: Box<dyn DenseScorer> = if cfg.synthetic.enabled {
        let gt = scene.gt.as_ref().expect("synthetic scenes carry ground truth");
        Box::new(make_synthetic_scorer(
            gt,
            scene.vocab.len(),
            cfg.synthetic.flip_prob,
            cfg.synthetic.sharpness,
            &mut stage_rng(cfg.seed, STREAM_SCORER),
        )?)
    } else {
        let dir = cfg
            .paths
            .scores
            .as_ref()
            .ok_or_else(|| Error::MissingInputs("paths.scores (not set)".into()))?;
        Box::new(FileScorer::open(dir, &scales)?)
    };
    let rgb = interpolate_rgb(&scene.cube)?;
    let window = u32::try_from(cfg.pseudo.window).map_err(|_| Error::Config("pseudo.window too large".into()))?;
    let stride = u32::try_from(cfg.pseudo.stride).map_err(|_| Error::Config("pseudo.stride too large".into()))?;
    let probs = fused_score(scorer.as_ref(), &rgb, &scene.vocab, &scales, cfg.pseudo.tau, window, stride)?;
    let labels = argmax_labels(&probs);
    let confidence = confidence_of(&probs)?;

    let out = prepare_out(cfg)?;
    if cfg.synthetic.enabled {
        write_ptf_file(out.join(files::SCENE_CUBE), &scene.cube.to_ptf())?;
        write_text(out.join(files::SCENE_WAVELENGTHS), &format_wavelengths(scene.cube.wavelengths()))?;
        if let Some(gt) = &scene.gt {
            write_ptf_file(out.join(files::SCENE_GT), &gt.to_ptf())?;
        }
    }
    write_text(out.join(files::CLASSES), &scene.vocab.classes_txt())?;
    write_text(out.join(files::ALIASES), &scene.vocab.aliases_txt())?;
    render_rgb_file(&rgb, out.join(files::RGB_PREVIEW))?;
    write_ptf_file(out.join(files::PSEUDO_PROBS), &probs.to_ptf())?;
    write_ptf_file(out.join(files::PSEUDO_LABELS), &labels.to_ptf())?;
    write_ptf_file(out.join(files::PSEUDO_CONFIDENCE), &confidence.to_ptf())?;
    render_map_file(&labels, &default_palette(scene.vocab.len()), out.join(files::PSEUDO_PNG))?;
    let report = match &scene.gt {
        Some(gt) => {
            let r = evaluate(&labels, gt, scene.vocab.len())?;
            info!("pseudo-label OA {:.2}%", r.oa);
            write_text(out.join(files::PSEUDO_METRICS), &r.to_text())?;
            Some(r)
        }
        None => None,
    };
    Ok(PseudoOutcome {
        probs,
        labels,
        confidence,
        metrics: report,
    })
}

/// Trained model predictions plus the warmup-only snapshot.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp<f32>,
    pub labels: LabelMap,
    pub warmup_labels: LabelMap,
    pub log: Vec<LogRow>,
    pub metrics: Option<MetricsReport>,
    pub warmup_metrics: Option<MetricsReport>,
}

const TRAIN_OUTPUTS: [&str; 6] = [
    files::MODEL_DIR,
    files::TRAIN_LOG,
    files::WARMUP_LABELS,
    files::PRED_PROBS,
    files::PRED_LABELS,
    files::PRED_PNG,
];

/// Warmup plus refinement on the stored pseudo-labels; writes the model
/// checkpoint, the training log and the final prediction.
pub fn cmd_train(cfg: &PipelineConfig, force: bool) -> Result<TrainOutcome> {
    run_train(cfg, force).map_err(|e| e.in_stage("train"))
}

fn run_train(cfg: &PipelineConfig, force: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure_writable(&cfg.paths.out, &TRAIN_OUTPUTS, force)?;
    let out = &cfg.paths.out;
    let needed = [files::PSEUDO_LABELS, files::PSEUDO_CONFIDENCE];
    let missing: Vec<String> = needed
        .iter()
        .map(|n| out.join(n))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(format!("run `pseudo` first: {}", missing.join(", "))));
    }
    let pseudo = LabelMap::load(out.join(files::PSEUDO_LABELS))?;
    let conf = ConfidenceMap::load(out.join(files::PSEUDO_CONFIDENCE))?;
    let scene = resolve_scene(cfg)?;
    let (h, w) = (scene.cube.height(), scene.cube.width());
    if pseudo.dim() != (h, w) || conf.values().dim() != (h, w) {
        return Err(Error::shape(format!("pseudo-labels {:?} vs cube {h}x{w}", pseudo.dim())));
    }
    let k = scene.vocab.len();
    if pseudo.inferred_classes() > k {
        return Err(Error::invalid("pseudo-labels exceed the vocabulary"));
    }
    let (norm, stats) = normalize_spectra(&scene.cube)?;

    let mut rng = stage_rng(cfg.seed, STREAM_TRAIN);
    let model = Mlp::<f32>::new(&cfg.train.widths(norm.bands(), k), &mut rng)?;
    let report = train_spectral(model, norm.pixels(), &pseudo, &conf, &cfg.train, &cfg.mixture, &mut rng)?;
    let probs = predict_map(&report.model, &norm)?;
    let labels = argmax_labels(&probs);
    let warmup_labels = argmax_labels(&predict_map(&report.warmup_model, &norm)?);

    let out = prepare_out(cfg)?;
    let model_dir = out.join(files::MODEL_DIR);
    save_mlp(&model_dir, &report.model, cfg.seed, &cfg.train)?;
    let b = stats.mean.len();
    let norm_data = stats.mean.iter().chain(&stats.std).map(|&v| v as f32).collect();
    write_ptf_file(model_dir.join(files::NORMALIZATION), &PtfTensor::from_f32(vec![2, b], norm_data)?)?;
    write_train_log(out.join(files::TRAIN_LOG), &report.log)?;
    write_ptf_file(out.join(files::WARMUP_LABELS), &warmup_labels.to_ptf())?;
    write_ptf_file(out.join(files::PRED_PROBS), &probs.to_ptf())?;
    write_ptf_file(out.join(files::PRED_LABELS), &labels.to_ptf())?;
    render_map_file(&labels, &default_palette(k), out.join(files::PRED_PNG))?;

    let (metrics, warmup_metrics) = match &scene.gt {
        Some(gt) => {
            let m = evaluate(&labels, gt, k)?;
            let wm = evaluate(&warmup_labels, gt, k)?;
            info!("warmup OA {:.2}%, refined OA {:.2}%", wm.oa, m.oa);
            (Some(m), Some(wm))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        model: report.model,
        labels,
        warmup_labels,
        log: report.log,
        metrics,
        warmup_metrics,
    })
}

/// Scores a label map against the ground truth and writes the report as
/// `key=value` text and as a CSV row.
pub fn cmd_eval(cfg: &PipelineConfig, force: bool) -> Result<MetricsReport> {
    run_eval(cfg, force).map_err(|e| e.in_stage("eval"))
}

fn run_eval(cfg: &PipelineConfig, force: bool) -> Result<MetricsReport> {
    cfg.validate()?;
    ensure_writable(&cfg.paths.out, &[files::METRICS_TXT, files::METRICS_CSV], force)?;
    let pred_path = cfg
        .paths
        .prediction
        .clone()
        .unwrap_or_else(|| cfg.paths.out.join(files::PRED_LABELS));
    if !pred_path.is_file() {
        return Err(Error::MissingInputs(format!("prediction {}", pred_path.display())));
    }
    let scene = resolve_scene(cfg)?;
    let gt = scene
        .gt
        .ok_or_else(|| Error::MissingInputs("ground truth (paths.gt)".into()))?;
    let pred = LabelMap::load(&pred_path)?;
    let report = evaluate(&pred, &gt, scene.vocab.len())?;
    let out = prepare_out(cfg)?;
    write_text(out.join(files::METRICS_TXT), &report.to_text())?;
    let csv_path = out.join(files::METRICS_CSV);
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::file(&csv_path, e))?;
    report.write_csv(file, scene.vocab.names())?;
    Ok(report)
}

/// Renders every label map found in the output directory (and the ground
/// truth, when known) into `render/`.
pub fn cmd_render(cfg: &PipelineConfig, force: bool) -> Result<Vec<PathBuf>> {
    run_render(cfg, force).map_err(|e| e.in_stage("render"))
}

fn run_render(cfg: &PipelineConfig, force: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let out = &cfg.paths.out;
    let render_dir = out.join(files::RENDER_DIR);
    let mut maps: Vec<(String, LabelMap)> = Vec::new();
    for name in [files::PSEUDO_LABELS, files::WARMUP_LABELS, files::PRED_LABELS] {
        let p = out.join(name);
        if p.is_file() {
            maps.push((name.trim_end_matches(".ptf").to_string(), LabelMap::load(&p)?));
        }
    }
    let scene = resolve_scene(cfg)?;
    if let Some(gt) = scene.gt {
        maps.push(("gt".to_string(), gt));
    }
    if maps.is_empty() {
        return Err(Error::MissingInputs(format!("no label maps in {}", out.display())));
    }
    let names: Vec<String> = maps.iter().map(|(n, _)| format!("{n}.png")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    ensure_writable(&render_dir, &name_refs, force)?;
    prepare_out(cfg)?;
    std::fs::create_dir_all(&render_dir).map_err(|e| Error::file(&render_dir, e))?;
    let palette = default_palette(scene.vocab.len());
    let mut written = Vec::new();
    for ((_, map), name) in maps.iter().zip(&names) {
        let p = render_dir.join(name);
        render_map_file(map, &palette, &p)?;
        written.push(p);
    }
    Ok(written)
}

/// Results of a full run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub pseudo: PseudoOutcome,
    pub train: TrainOutcome,
    /// `None` when no ground truth is available.
    pub eval: Option<MetricsReport>,
}

/// `pseudo`, then `train`, then `eval` (skipped with a notice when there is
/// no ground truth). The first failing stage aborts the run.
pub fn cmd_pipeline(cfg: &PipelineConfig, force: bool) -> Result<PipelineOutcome> {
    let pseudo = cmd_pseudo(cfg, force)?;
    let train = cmd_train(cfg, force)?;
    let has_gt = cfg.synthetic.enabled || cfg.paths.gt.as_ref().is_some_and(|p| p.exists());
    let eval = if has_gt {
        Some(cmd_eval(cfg, force)?)
    } else {
        warn!("no ground truth configured; skipping eval");
        None
    };
    Ok(PipelineOutcome { pseudo, train, eval })
}

/// Reads back the cube of a synthetic run.
pub fn load_scene_cube(out: impl AsRef<Path>) -> Result<HsiCube> {
    let out = out.as_ref();
    HsiCube::load(out.join(files::SCENE_CUBE), out.join(files::SCENE_WAVELENGTHS))
}
