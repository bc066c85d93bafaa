//! Warmup and refinement of the spectral classifier on noisy
//! pseudo-labels, with the loss trajectory and accuracy before and after.

use hsi_zeroshot::eval::{confusion, metrics};
use hsi_zeroshot::labeler::{argmax_labels, bvsb, fused_score, make_synthetic_scorer, ClassVocabulary, LabelMap, ScaleSet};
use hsi_zeroshot::mixture::MixtureConfig;
use hsi_zeroshot::prep::{interpolate_rgb, normalize_spectra};
use hsi_zeroshot::synthetic::{generate_scene, SceneConfig};
use hsi_zeroshot::trainer::{predict_map, train_spectral, Mlp, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsi_zeroshot::Result<()> {
    let scene_cfg = SceneConfig::default();
    let scene = generate_scene(&scene_cfg, &mut ChaCha8Rng::seed_from_u64(1))?;
    let k = scene_cfg.classes;
    let vocab = ClassVocabulary::new(scene.class_names())?;
    let rgb = interpolate_rgb(&scene.cube)?;
    let scorer = make_synthetic_scorer(&scene.gt, k, 0.3, 5.0, &mut ChaCha8Rng::seed_from_u64(2))?;
    let probs = fused_score(&scorer, &rgb, &vocab, &ScaleSet::new(vec![1.0, 2.0])?, 0.01, 224, 112)?;
    let pseudo = argmax_labels(&probs);
    let conf = bvsb(&probs)?;

    let (norm, _) = normalize_spectra(&scene.cube)?;
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Mlp::<f32>::new(&cfg.widths(norm.bands(), k), &mut rng)?;
    let report = train_spectral(model, norm.pixels(), &pseudo, &conf, &cfg, &MixtureConfig::default(), &mut rng)?;

    for row in report.log.iter().step_by(50) {
        println!(
            "iter {:3}  lr {:.2e}  random {:.3}  confident {:.3}  hard {:.3}",
            row.iteration, row.lr, row.loss_r, row.loss_c, row.loss_h
        );
    }
    if let Some(sets) = &report.sets {
        println!("confident set {}, hard set {}", sets.confident.len(), sets.hard.len());
    }
    let oa = |labels: &LabelMap| -> hsi_zeroshot::Result<f64> { Ok(metrics(&confusion(labels, &scene.gt, k)?)?.oa) };
    println!("pseudo-labels OA {:.2}", oa(&pseudo)?);
    println!("after warmup  OA {:.2}", oa(&argmax_labels(&predict_map(&report.warmup_model, &norm)?))?);
    println!("after refine  OA {:.2}", oa(&argmax_labels(&predict_map(&report.model, &norm)?))?);
    Ok(())
}
