//! Separable bicubic resampling with the Catmull-Rom kernel (`a = -0.5`).
//!
//! Output pixel `d` samples the source at `(d + 0.5) / factor - 0.5`; taps
//! outside the image are clamped to the border.

use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};

const A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel.
pub fn catmull_rom(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped source indices and their weights for one output coordinate.
#[derive(Debug, Clone, Copy)]
struct Taps {
    idx: [usize; 4],
    w: [f64; 4],
}

fn taps(out_len: usize, in_len: usize, factor: f64) -> Vec<Taps> {
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|d| {
            let src = (d as f64 + 0.5) / factor - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0f64; 4];
            for j in 0..4 {
                let offset = j as isize - 1;
                idx[j] = (base + offset).clamp(0, last) as usize;
                w[j] = catmull_rom(t - offset as f64);
            }
            Taps { idx, w }
        })
        .collect()
}

/// Resamples `[H][W][C]` to `[out_h][out_w][C]` using per-axis factors for the
/// coordinate mapping.
pub fn resample_to(
    image: ArrayView3<'_, f32>,
    out_h: usize,
    out_w: usize,
    factor_y: f64,
    factor_x: f64,
) -> Result<Array3<f32>> {
    let (h, w, c) = image.dim();
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::invalid(format!(
            "cannot resample {h}x{w} to {out_h}x{out_w}"
        )));
    }
    if !(factor_x > 0.0 && factor_y > 0.0) {
        return Err(Error::invalid("resample factors must be positive"));
    }
    let tx = taps(out_w, w, factor_x);
    let ty = taps(out_h, h, factor_y);

    // horizontal pass, f64 intermediate
    let mut mid = Array3::<f64>::zeros((h, out_w, c));
    for r in 0..h {
        for (x, t) in tx.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += t.w[j] * image[[r, t.idx[j], ch]] as f64;
                }
                mid[[r, x, ch]] = acc;
            }
        }
    }
    let mut out = Array3::<f32>::zeros((out_h, out_w, c));
    for (y, t) in ty.iter().enumerate() {
        for x in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += t.w[j] * mid[[t.idx[j], x, ch]];
                }
                out[[y, x, ch]] = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Output extent for scaling `len` by `factor`.
pub fn scaled_len(len: usize, factor: f32) -> usize {
    (len as f64 * factor as f64).round() as usize
}

/// Resamples by `factor`; output extents are `round(H * factor)` x `round(W * factor)`.
pub fn bicubic_resample(image: ArrayView3<'_, f32>, factor: f32) -> Result<Array3<f32>> {
    if !(factor > 0.0) {
        return Err(Error::invalid(format!("resample factor must be > 0, got {factor}")));
    }
    let (h, w, _) = image.dim();
    let f = factor as f64;
    resample_to(image, scaled_len(h, factor), scaled_len(w, factor), f, f)
}
