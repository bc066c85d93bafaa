use ndarray::{s, Array2, ArrayView2, NdFloat};

use crate::error::{Error, Result};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean soft-target cross-entropy and its gradient with respect to the
/// pre-softmax scores, `(p - t) / n`.
pub fn cross_entropy_soft<F: NdFloat>(
    probs: ArrayView2<'_, F>,
    targets: ArrayView2<'_, F>,
) -> Result<(f64, Array2<F>)> {
    if probs.dim() != targets.dim() {
        return Err(Error::shape(format!(
            "probs {:?} vs targets {:?}",
            probs.dim(),
            targets.dim()
        )));
    }
    let n = probs.nrows();
    if n == 0 {
        return Ok((0.0, Array2::zeros(probs.dim())));
    }
    let mut loss = 0.0f64;
    for (p, t) in probs.iter().zip(targets.iter()) {
        let t = t.to_f64().expect("finite");
        if t != 0.0 {
            loss -= t * p.to_f64().expect("finite").max(PROB_FLOOR).ln();
        }
    }
    let scale = F::from(n).expect("batch size");
    let grad = (&probs - &targets).mapv(|v| v / scale);
    Ok((loss / n as f64, grad))
}

/// Relative weights of the confident and hard terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub confident: f64,
    pub hard: f64,
}

/// Individual terms of the three-set objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub random: f64,
    pub confident: f64,
    pub hard: f64,
    pub total: f64,
}

/// Row counts of the random, confident and hard segments of a stacked batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segments {
    pub random: usize,
    pub confident: usize,
    pub hard: usize,
}

impl Segments {
    pub fn total(&self) -> usize {
        self.random + self.confident + self.hard
    }
}

/// `CE_r + w_c · CE_c + w_h · CE_h` over a batch stacked as
/// `[random; confident; hard]`. Each term is a mean over its own rows; an
/// empty segment contributes nothing.
pub fn composite_loss<F: NdFloat>(
    probs: ArrayView2<'_, F>,
    targets: ArrayView2<'_, F>,
    segments: Segments,
    weights: LossWeights,
) -> Result<(LossTerms, Array2<F>)> {
    if probs.nrows() != segments.total() {
        return Err(Error::shape(format!(
            "batch has {} rows, segments sum to {}",
            probs.nrows(),
            segments.total()
        )));
    }
    let mut grad = Array2::<F>::zeros(probs.dim());
    let bounds = [
        (0, segments.random, 1.0),
        (segments.random, segments.random + segments.confident, weights.confident),
        (segments.random + segments.confident, segments.total(), weights.hard),
    ];
    let mut values = [0.0f64; 3];
    for (i, &(lo, hi, w)) in bounds.iter().enumerate() {
        if lo == hi {
            continue;
        }
        let (loss, g) = cross_entropy_soft(probs.slice(s![lo..hi, ..]), targets.slice(s![lo..hi, ..]))?;
        values[i] = loss;
        let wf = F::from(w).expect("finite weight");
        grad.slice_mut(s![lo..hi, ..]).assign(&g.mapv(|v| v * wf));
    }
    let terms = LossTerms {
        random: values[0],
        confident: values[1],
        hard: values[2],
        total: values[0] + weights.confident * values[1] + weights.hard * values[2],
    };
    Ok((terms, grad))
}
