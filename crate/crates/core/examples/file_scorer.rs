//! Consumes a scorer export directory: `scores_s{factor}.ptf` per scale,
//! `classes.txt` and `aliases.txt`. The export here is faked from a label
//! layout so the example runs without the vision-language model.

use hsi_zeroshot::labeler::{
    argmax_labels, fused_score, scale_file_name, ClassVocabulary, FileScorer, ScaleSet,
};
use hsi_zeroshot::labeler::resample::scaled_len;
use hsi_zeroshot::prep::RgbImage;
use hsi_zeroshot::ptf::{write_ptf_file, PtfTensor};
use ndarray::Array3;

fn main() -> hsi_zeroshot::Result<()> {
    let dir = std::env::temp_dir().join("hsi_zeroshot_scores");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (h, w, k) = (16usize, 20usize, 3usize);
    let class_at = |y: f32, x: f32| if x < 0.4 { 0 } else if y < 0.5 { 1 } else { 2 };

    for s in [1.0f32, 2.0] {
        let (sh, sw) = (scaled_len(h, s), scaled_len(w, s));
        let scores = Array3::from_shape_fn((sh, sw, k), |(r, c, j)| {
            let hit = class_at((r as f32 + 0.5) / sh as f32, (c as f32 + 0.5) / sw as f32) == j;
            if hit { 3.0 } else { 0.0 }
        });
        write_ptf_file(dir.join(scale_file_name(s)), &PtfTensor::from_array_f32(&scores))?;
    }
    std::fs::write(dir.join("classes.txt"), "Water\nTrees\nMeadows\n").expect("write classes");
    std::fs::write(dir.join("aliases.txt"), "Water\tRiver or lake\n").expect("write aliases");

    let vocab = ClassVocabulary::load_dir(&dir)?;
    println!("classes {:?}, prompt for class 0: {:?}", vocab.names(), vocab.prompt(0));
    let available = FileScorer::discover(&dir)?;
    println!("scales on disk: {available:?}");

    let scales = ScaleSet::new(available)?;
    let scorer = FileScorer::open(&dir, &scales)?;
    // the proxy image only fixes the frame size for a file-backed scorer
    let rgb = RgbImage::new(Array3::zeros((h, w, 3)))?;
    let probs = fused_score(&scorer, &rgb, &vocab, &scales, 0.01, 224, 112)?;
    let labels = argmax_labels(&probs);
    for row in labels.values().rows().into_iter().step_by(4) {
        println!("{}", row.iter().map(|l| l.to_string()).collect::<String>());
    }
    Ok(())
}
