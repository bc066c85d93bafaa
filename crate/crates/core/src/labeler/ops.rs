use ndarray::{Array2, Array3, Axis, Zip};

use super::maps::{ConfidenceMap, LabelMap, ProbMap, ScoreMap};
use crate::error::{Error, Result};

/// Per-pixel `exp(s_k / tau) / sum_k' exp(s_k' / tau)` with max subtraction.
pub fn softmax_temperature(scores: &ScoreMap, tau: f32) -> Result<ProbMap> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    let tau = tau as f64;
    let mut out = Array3::<f32>::zeros(scores.dim());
    let mut buf = Vec::with_capacity(scores.dim().2);
    Zip::from(out.lanes_mut(Axis(2)))
        .and(scores.values().lanes(Axis(2)))
        .for_each(|mut dst, src| {
            let max = src.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s as f64));
            buf.clear();
            buf.extend(src.iter().map(|&s| ((s as f64 - max) / tau).exp()));
            let z: f64 = buf.iter().sum();
            for (d, e) in dst.iter_mut().zip(&buf) {
                *d = (e / z) as f32;
            }
        });
    Ok(ProbMap::from_normalized(out))
}

/// Best-versus-second-best margin per pixel.
pub fn bvsb(probs: &ProbMap) -> Result<ConfidenceMap> {
    let (h, w, k) = probs.dim();
    if k < 2 {
        return Err(Error::invalid("bvsb needs at least 2 classes"));
    }
    let mut out = Array2::<f32>::zeros((h, w));
    Zip::from(&mut out)
        .and(probs.values().lanes(Axis(2)))
        .for_each(|dst, px| {
            let (mut best, mut second) = (f32::NEG_INFINITY, f32::NEG_INFINITY);
            for &p in px {
                if p > best {
                    second = best;
                    best = p;
                } else if p > second {
                    second = p;
                }
            }
            *dst = (best - second).clamp(0.0, 1.0);
        });
    ConfidenceMap::new(out)
}

/// Index of the largest probability per pixel; ties go to the lowest index.
pub fn argmax_labels(probs: &ProbMap) -> LabelMap {
    let (h, w, _) = probs.dim();
    let mut out = Array2::<u16>::zeros((h, w));
    Zip::from(&mut out)
        .and(probs.values().lanes(Axis(2)))
        .for_each(|dst, px| {
            let mut best = 0usize;
            for (k, &p) in px.iter().enumerate().skip(1) {
                if p > px[best] {
                    best = k;
                }
            }
            *dst = best as u16;
        });
    LabelMap::from_raw(out)
}
