use ndarray::{s, Array2, Array3, Axis, Zip};

use super::maps::{ClassVocabulary, ProbMap, ScaleSet, ScoreMap};
use super::ops::softmax_temperature;
use super::resample::{bicubic_resample, resample_to};
use super::scorer::{DenseScorer, PatchView};
use crate::error::{Error, Result};
use crate::prep::RgbImage;

/// Window start offsets along one axis. Windows advance by `stride`; the last
/// one is snapped so it ends at the border. A window longer than the extent
/// collapses to a single full-extent window.
pub fn tile_offsets(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    if window >= extent {
        return vec![0];
    }
    let mut offsets = Vec::new();
    let mut off = 0;
    loop {
        offsets.push(off);
        if off + window >= extent {
            break;
        }
        off += stride;
        if off + window > extent {
            offsets.push(extent - window);
            break;
        }
    }
    offsets
}

fn check_window(window: u32, stride: u32) -> Result<()> {
    if window == 0 || stride == 0 || stride > window {
        return Err(Error::invalid(format!(
            "need 1 <= stride <= window, got window {window}, stride {stride}"
        )));
    }
    Ok(())
}

/// Sliding-window scoring of `frame`, which is the source image upsampled by
/// `scale`. Each pixel receives the mean over all windows covering it.
pub fn tiled_score_at(
    scorer: &dyn DenseScorer,
    frame: &RgbImage,
    vocab: &ClassVocabulary,
    window: u32,
    stride: u32,
    scale: f32,
) -> Result<ScoreMap> {
    check_window(window, stride)?;
    let (h, w) = (frame.height(), frame.width());
    let k = vocab.len();
    let rows = tile_offsets(h, window as usize, stride as usize);
    let cols = tile_offsets(w, window as usize, stride as usize);
    let wh = (window as usize).min(h);
    let ww = (window as usize).min(w);

    let mut sum = Array3::<f64>::zeros((h, w, k));
    let mut count = Array2::<u32>::zeros((h, w));
    for &r0 in &rows {
        for &c0 in &cols {
            let patch = RgbImage::new(
                frame
                    .values()
                    .slice(s![r0..r0 + wh, c0..c0 + ww, ..])
                    .to_owned(),
            )?;
            let view = PatchView {
                scale,
                row: r0,
                col: c0,
                frame_height: h,
                frame_width: w,
            };
            let scores = scorer.score(&patch, &view, vocab)?;
            if scores.dim() != (wh, ww, k) {
                return Err(Error::shape(format!(
                    "scorer returned {:?} for a {wh}x{ww} patch with {k} classes",
                    scores.dim()
                )));
            }
            let mut acc = sum.slice_mut(s![r0..r0 + wh, c0..c0 + ww, ..]);
            Zip::from(&mut acc)
                .and(scores.values())
                .for_each(|a, &v| *a += v as f64);
            count
                .slice_mut(s![r0..r0 + wh, c0..c0 + ww])
                .mapv_inplace(|c| c + 1);
        }
    }
    let mut out = Array3::<f32>::zeros((h, w, k));
    Zip::from(out.lanes_mut(Axis(2)))
        .and(sum.lanes(Axis(2)))
        .and(&count)
        .for_each(|mut dst, src, &n| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s / n as f64) as f32;
            }
        });
    ScoreMap::new(out)
}

/// Sliding-window scoring at the original resolution.
pub fn tiled_score(
    scorer: &dyn DenseScorer,
    rgb: &RgbImage,
    vocab: &ClassVocabulary,
    window: u32,
    stride: u32,
) -> Result<ScoreMap> {
    tiled_score_at(scorer, rgb, vocab, window, stride, 1.0)
}

/// Clamps negatives to zero and rescales each pixel to sum to one. Pixels
/// whose mass vanishes entirely become uniform.
fn clamp_renormalize(values: &mut Array3<f32>) {
    for mut px in values.lanes_mut(Axis(2)) {
        px.mapv_inplace(|v| v.max(0.0));
        let s: f64 = px.iter().map(|&v| v as f64).sum();
        if s > 0.0 {
            px.mapv_inplace(|v| (v as f64 / s) as f32);
        } else {
            let u = 1.0 / px.len() as f32;
            px.fill(u);
        }
    }
}

/// Probability map for one scale, mapped back to the source resolution.
fn scale_probs(
    scorer: &dyn DenseScorer,
    rgb: &RgbImage,
    vocab: &ClassVocabulary,
    scale: f32,
    tau: f32,
    window: u32,
    stride: u32,
) -> Result<Array3<f32>> {
    if scale == 1.0 {
        let scores = tiled_score_at(scorer, rgb, vocab, window, stride, 1.0)?;
        return Ok(softmax_temperature(&scores, tau)?.into_inner());
    }
    let frame = RgbImage::clamped(bicubic_resample(rgb.values().view(), scale)?)?;
    let scores = tiled_score_at(scorer, &frame, vocab, window, stride, scale)?;
    let probs = softmax_temperature(&scores, tau)?;
    let inv = 1.0 / scale as f64;
    let mut down = resample_to(probs.values().view(), rgb.height(), rgb.width(), inv, inv)?;
    clamp_renormalize(&mut down);
    Ok(down)
}

/// Multi-scale fusion: per scale upsample, tile-score, softmax and downsample,
/// then average the probability maps.
///
/// Scales are processed in ascending order so the result does not depend on
/// the order they were given in.
pub fn fused_score(
    scorer: &dyn DenseScorer,
    rgb: &RgbImage,
    vocab: &ClassVocabulary,
    scales: &ScaleSet,
    tau: f32,
    window: u32,
    stride: u32,
) -> Result<ProbMap> {
    check_window(window, stride)?;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    let mut factors = scales.factors().to_vec();
    factors.sort_by(f32::total_cmp);

    if factors.len() == 1 {
        let p = scale_probs(scorer, rgb, vocab, factors[0], tau, window, stride)?;
        return Ok(ProbMap::from_normalized(p));
    }

    let (h, w) = (rgb.height(), rgb.width());
    let mut acc = Array3::<f64>::zeros((h, w, vocab.len()));
    for &f in &factors {
        let p = scale_probs(scorer, rgb, vocab, f, tau, window, stride)?;
        Zip::from(&mut acc).and(&p).for_each(|a, &v| *a += v as f64);
    }
    let n = factors.len() as f64;
    let mut out = Array3::<f32>::zeros(acc.dim());
    Zip::from(out.lanes_mut(Axis(2)))
        .and(acc.lanes(Axis(2)))
        .for_each(|mut dst, src| {
            let total: f64 = src.iter().sum::<f64>() / n;
            // mean of normalized maps; rescale only beyond rounding noise
            let norm = if (total - 1.0).abs() > 1e-6 { total } else { 1.0 };
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s / n / norm) as f32;
            }
        });
    Ok(ProbMap::from_normalized(out))
}
