use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};
use rand::Rng;

use super::maps::{ClassVocabulary, LabelMap, ScaleSet, ScoreMap, IGNORE};
use crate::error::{Error, Result};
use crate::prep::RgbImage;
use crate::ptf::read_ptf_file;

/// Where a patch sits: its offset inside the frame produced by upsampling
/// the original image by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchView {
    pub scale: f32,
    pub row: usize,
    pub col: usize,
    pub frame_height: usize,
    pub frame_width: usize,
}

/// Dense open-vocabulary scoring: one raw score per class for every pixel of
/// the patch. Output height and width equal the patch's.
pub trait DenseScorer: Sync {
    fn score(&self, patch: &RgbImage, view: &PatchView, vocab: &ClassVocabulary)
        -> Result<ScoreMap>;
}

impl<F> DenseScorer for F
where
    F: Fn(&RgbImage, &PatchView, &ClassVocabulary) -> Result<ScoreMap> + Sync,
{
    fn score(
        &self,
        patch: &RgbImage,
        view: &PatchView,
        vocab: &ClassVocabulary,
    ) -> Result<ScoreMap> {
        self(patch, view, vocab)
    }
}

/// File name of the exported score map for one scale, e.g. `scores_s2.ptf`.
pub fn scale_file_name(factor: f32) -> String {
    format!("scores_s{factor}.ptf")
}

fn parse_scale_file_name(name: &str) -> Option<f32> {
    name.strip_prefix("scores_s")?
        .strip_suffix(".ptf")?
        .parse::<f32>()
        .ok()
        .filter(|f| f.is_finite() && *f > 0.0)
}

/// Serves windows out of full-frame score maps exported per scale.
#[derive(Debug, Clone)]
pub struct FileScorer {
    frames: Vec<(f32, Array3<f32>)>,
}

impl FileScorer {
    /// Loads `scores_s{factor}.ptf` for every factor in `scales`.
    pub fn open(dir: impl AsRef<Path>, scales: &ScaleSet) -> Result<Self> {
        let dir = dir.as_ref();
        let paths: Vec<(f32, PathBuf)> = scales
            .factors()
            .iter()
            .map(|&f| (f, dir.join(scale_file_name(f))))
            .collect();
        let missing: Vec<String> = paths
            .iter()
            .filter(|(_, p)| !p.is_file())
            .map(|(_, p)| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingInputs(format!(
                "score maps not found: {}",
                missing.join(", ")
            )));
        }
        let mut frames = Vec::with_capacity(paths.len());
        for (f, p) in paths {
            let arr = read_ptf_file(&p)?
                .into_array_f32()?
                .into_dimensionality::<ndarray::Ix3>()
                .map_err(|_| Error::shape(format!("{}: expected [H][W][K]", p.display())))?;
            frames.push((f, ScoreMap::new(arr)?.into_inner()));
        }
        Ok(Self { frames })
    }

    /// Scale factors for which a score file exists in `dir`, ascending.
    pub fn discover(dir: impl AsRef<Path>) -> Result<Vec<f32>> {
        let dir = dir.as_ref();
        let mut found = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
            let entry = entry?;
            if let Some(f) = entry.file_name().to_str().and_then(parse_scale_file_name) {
                found.push(f);
            }
        }
        found.sort_by(f32::total_cmp);
        Ok(found)
    }

    pub fn from_frames(frames: Vec<(f32, ScoreMap)>) -> Self {
        Self {
            frames: frames.into_iter().map(|(f, m)| (f, m.into_inner())).collect(),
        }
    }

    fn frame(&self, scale: f32) -> Option<&Array3<f32>> {
        self.frames
            .iter()
            .find(|(f, _)| (f - scale).abs() <= 1e-6 * scale.max(1.0))
            .map(|(_, a)| a)
    }
}

impl DenseScorer for FileScorer {
    fn score(
        &self,
        patch: &RgbImage,
        view: &PatchView,
        vocab: &ClassVocabulary,
    ) -> Result<ScoreMap> {
        let frame = self
            .frame(view.scale)
            .ok_or_else(|| Error::MissingInputs(format!("no score map for scale {}", view.scale)))?;
        let (fh, fw, k) = frame.dim();
        if (fh, fw) != (view.frame_height, view.frame_width) {
            return Err(Error::shape(format!(
                "score map for scale {} is {fh}x{fw}, expected {}x{}",
                view.scale, view.frame_height, view.frame_width
            )));
        }
        if k != vocab.len() {
            return Err(Error::shape(format!(
                "score map has {k} classes, vocabulary has {}",
                vocab.len()
            )));
        }
        let (ph, pw) = (patch.height(), patch.width());
        if view.row + ph > fh || view.col + pw > fw {
            return Err(Error::shape("patch extends past the score map"));
        }
        let crop = frame
            .slice(s![view.row..view.row + ph, view.col..view.col + pw, ..])
            .to_owned();
        ScoreMap::new(crop)
    }
}

/// Noise-corrupted oracle scorer built from a ground-truth map.
///
/// Every original pixel emits `sharpness` for one class and 0 for the rest.
/// The emitting class is the true one, or with probability `flip_prob` a
/// uniformly drawn wrong class. Draws are made once per original pixel, so
/// all scales see the same corruption.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    emitted: Array2<u16>,
    num_classes: usize,
    sharpness: f32,
}

impl SyntheticScorer {
    /// Class emitted at each original pixel.
    pub fn emitted(&self) -> &Array2<u16> {
        &self.emitted
    }
}

pub fn make_synthetic_scorer<R: Rng + ?Sized>(
    gt: &LabelMap,
    num_classes: usize,
    flip_prob: f32,
    sharpness: f32,
    rng: &mut R,
) -> Result<SyntheticScorer> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::invalid(format!("flip_prob must be in [0, 1], got {flip_prob}")));
    }
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::invalid(format!("sharpness must be > 0, got {sharpness}")));
    }
    if num_classes == 0 || gt.inferred_classes() > num_classes {
        return Err(Error::invalid("ground truth labels exceed the class count"));
    }
    let k = num_classes as u32;
    let emitted = gt.values().mapv(|truth| {
        if truth == IGNORE {
            return rng.random_range(0..k) as u16;
        }
        let flip = rng.random::<f64>() < flip_prob as f64;
        if !flip || k < 2 {
            return truth;
        }
        // uniform over the k - 1 wrong classes
        let r = rng.random_range(0..k - 1) as u16;
        if r >= truth {
            r + 1
        } else {
            r
        }
    });
    Ok(SyntheticScorer {
        emitted,
        num_classes,
        sharpness,
    })
}

impl DenseScorer for SyntheticScorer {
    fn score(
        &self,
        patch: &RgbImage,
        view: &PatchView,
        vocab: &ClassVocabulary,
    ) -> Result<ScoreMap> {
        if vocab.len() != self.num_classes {
            return Err(Error::shape(format!(
                "synthetic scorer built for {} classes, vocabulary has {}",
                self.num_classes,
                vocab.len()
            )));
        }
        let (h, w) = self.emitted.dim();
        let scale = view.scale as f64;
        let to_orig = |frame_idx: usize, len: usize| {
            (((frame_idx as f64 + 0.5) / scale).floor() as usize).min(len - 1)
        };
        let mut out = Array3::<f32>::zeros((patch.height(), patch.width(), self.num_classes));
        for py in 0..patch.height() {
            let r = to_orig(view.row + py, h);
            for px in 0..patch.width() {
                let c = to_orig(view.col + px, w);
                out[[py, px, self.emitted[[r, c]] as usize]] = self.sharpness;
            }
        }
        ScoreMap::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(k: usize) -> ClassVocabulary {
        ClassVocabulary::new((0..k).map(|i| format!("c{i}")).collect()).unwrap()
    }

    fn full_view(h: usize, w: usize) -> PatchView {
        PatchView {
            scale: 1.0,
            row: 0,
            col: 0,
            frame_height: h,
            frame_width: w,
        }
    }

    fn argmax(scores: &ScoreMap) -> Array2<u16> {
        let (h, w, k) = scores.dim();
        Array2::from_shape_fn((h, w), |(r, c)| {
            (0..k)
                .max_by(|&a, &b| {
                    scores.values()[[r, c, a]]
                        .total_cmp(&scores.values()[[r, c, b]])
                        .then(b.cmp(&a))
                })
                .unwrap() as u16
        })
    }

    fn gt_map(h: usize, w: usize, k: u16) -> LabelMap {
        LabelMap::from_raw(Array2::from_shape_fn((h, w), |(r, c)| ((r * 7 + c * 3) % k as usize) as u16))
    }

    #[test]
    fn no_flip_reproduces_truth() {
        let gt = gt_map(10, 12, 4);
        let s = make_synthetic_scorer(&gt, 4, 0.0, 5.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let patch = RgbImage::new(Array3::zeros((10, 12, 3))).unwrap();
        let scores = s.score(&patch, &full_view(10, 12), &vocab(4)).unwrap();
        assert_eq!(&argmax(&scores), gt.values());
    }

    #[test]
    fn forced_flip_two_classes() {
        let gt = gt_map(6, 6, 2);
        let s = make_synthetic_scorer(&gt, 2, 1.0, 5.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let patch = RgbImage::new(Array3::zeros((6, 6, 3))).unwrap();
        let scores = s.score(&patch, &full_view(6, 6), &vocab(2)).unwrap();
        assert_eq!(argmax(&scores), gt.values().mapv(|v| 1 - v));
    }

    #[test]
    fn flip_rate_matches() {
        let gt = gt_map(250, 400, 4);
        let s = make_synthetic_scorer(&gt, 4, 0.3, 5.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let flips = s
            .emitted()
            .iter()
            .zip(gt.values())
            .filter(|(a, b)| a != b)
            .count();
        let rate = flips as f64 / 1e5;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn parameter_ranges_checked() {
        let gt = gt_map(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_synthetic_scorer(&gt, 2, 1.5, 5.0, &mut rng).is_err());
        assert!(make_synthetic_scorer(&gt, 2, 0.1, 0.0, &mut rng).is_err());
        assert!(make_synthetic_scorer(&gt, 1, 0.1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn upsampled_frame_maps_to_original_pixels() {
        let gt = gt_map(3, 3, 3);
        let s = make_synthetic_scorer(&gt, 3, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let patch = RgbImage::new(Array3::zeros((6, 6, 3))).unwrap();
        let view = PatchView {
            scale: 2.0,
            ..full_view(6, 6)
        };
        let scores = s.score(&patch, &view, &vocab(3)).unwrap();
        let labels = argmax(&scores);
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(labels[[r, c]], gt.values()[[r / 2, c / 2]]);
            }
        }
    }

    #[test]
    fn file_names_round_trip() {
        assert_eq!(scale_file_name(1.0), "scores_s1.ptf");
        assert_eq!(scale_file_name(1.5), "scores_s1.5.ptf");
        assert_eq!(parse_scale_file_name("scores_s2.ptf"), Some(2.0));
        assert_eq!(parse_scale_file_name("scores_s0.ptf"), None);
        assert_eq!(parse_scale_file_name("other.ptf"), None);
    }
}
