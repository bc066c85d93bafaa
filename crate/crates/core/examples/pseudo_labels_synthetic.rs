//! Pseudo-labels from a simulated noisy scorer: fused probabilities,
//! argmax labels, margins and agreement with ground truth.

use hsi_zeroshot::eval::{confusion, metrics};
use hsi_zeroshot::labeler::{argmax_labels, bvsb, fused_score, make_synthetic_scorer, ClassVocabulary, ScaleSet};
use hsi_zeroshot::prep::interpolate_rgb;
use hsi_zeroshot::synthetic::{generate_scene, SceneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsi_zeroshot::Result<()> {
    let cfg = SceneConfig::default();
    let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(7))?;
    let vocab = ClassVocabulary::new(scene.class_names())?;
    let rgb = interpolate_rgb(&scene.cube)?;

    for flip in [0.0f32, 0.1, 0.3, 0.5] {
        let scorer = make_synthetic_scorer(&scene.gt, cfg.classes, flip, 5.0, &mut ChaCha8Rng::seed_from_u64(8))?;
        let probs = fused_score(&scorer, &rgb, &vocab, &ScaleSet::new(vec![1.0, 2.0])?, 0.01, 224, 112)?;
        let labels = argmax_labels(&probs);
        let conf = bvsb(&probs)?;
        let m = metrics(&confusion(&labels, &scene.gt, cfg.classes)?)?;
        let mean_conf = conf.values().mean().unwrap_or(0.0);
        println!("flip {flip:.1}: OA {:5.2}  kappa {:6.2}  mean margin {mean_conf:.3}", m.oa, m.kappa);
    }
    Ok(())
}
