//! Tiled scoring at several input scales with a hand-written scorer, and
//! how fusing scales changes the labels.

use hsi_zeroshot::labeler::{
    argmax_labels, fused_score, tiled_score, ClassVocabulary, PatchView, ScaleSet, ScoreMap,
};
use hsi_zeroshot::prep::RgbImage;
use hsi_zeroshot::Result;
use ndarray::Array3;

/// Class 0 likes red, class 1 likes green, class 2 likes blue. Scores are
/// computed per pixel, so the window layout only matters through blending.
fn color_scorer(patch: &RgbImage, _view: &PatchView, vocab: &ClassVocabulary) -> Result<ScoreMap> {
    let v = patch.values();
    ScoreMap::new(Array3::from_shape_fn((patch.height(), patch.width(), vocab.len()), |(r, c, k)| {
        v[[r, c, k]] - 0.5 * (v[[r, c, 0]] + v[[r, c, 1]] + v[[r, c, 2]] - v[[r, c, k]])
    }))
}

fn main() -> Result<()> {
    // stripes of one color with a thin stripe of another
    let rgb = RgbImage::new(Array3::from_shape_fn((24, 24, 3), |(r, c, ch)| {
        let band = if c % 8 == 0 { 1 } else if r < 12 { 0 } else { 2 };
        if ch == band { 0.9 } else { 0.1 }
    }))?;
    let vocab = ClassVocabulary::new(vec!["red".into(), "green".into(), "blue".into()])?;

    let tiled = tiled_score(&color_scorer, &rgb, &vocab, 8, 4)?;
    println!("tiled scores: {:?}", tiled.dim());

    for scales in [vec![1.0], vec![1.0, 2.0], vec![0.5, 1.0, 2.0]] {
        let probs = fused_score(&color_scorer, &rgb, &vocab, &ScaleSet::new(scales.clone())?, 0.05, 8, 4)?;
        let labels = argmax_labels(&probs);
        let mut counts = [0usize; 3];
        labels.values().iter().for_each(|&l| counts[l as usize] += 1);
        println!("scales {scales:?}: class counts {counts:?}");
    }
    Ok(())
}
