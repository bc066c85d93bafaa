//! Hyperspectral preprocessing: RGB proxy synthesis, per-band z-scoring and
//! training-time noise augmentation.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ptf::{read_ptf_file, PtfTensor};

/// Target wavelengths (nm) for the red, green and blue proxy channels.
pub const RGB_WAVELENGTHS: [f32; 3] = [655.0, 553.0, 451.0];

/// Lower and upper percentiles of the per-channel contrast stretch.
pub const STRETCH_PERCENTILES: (f64, f64) = (2.0, 98.0);

/// Floor applied to per-band standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// A hyperspectral cube laid out `[H][W][B]` with per-band wavelengths in nm.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    values: Array3<f32>,
    wavelengths: Vec<f32>,
}

impl HsiCube {
    pub fn new(values: Array3<f32>, wavelengths: Vec<f32>) -> Result<Self> {
        let bands = values.dim().2;
        if wavelengths.len() != bands {
            return Err(Error::shape(format!(
                "{} wavelengths for a cube with {} bands",
                wavelengths.len(),
                bands
            )));
        }
        if wavelengths.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("wavelengths must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cube contains non-finite values"));
        }
        Ok(Self {
            values,
            wavelengths,
        })
    }

    /// Loads a `[H][W][B]` f32 tensor and a wavelength list.
    pub fn load(cube: impl AsRef<Path>, wavelengths: impl AsRef<Path>) -> Result<Self> {
        let arr = read_ptf_file(cube)?.into_array_f32()?;
        let arr = arr
            .into_dimensionality::<ndarray::Ix3>()
            .map_err(|_| Error::shape("cube tensor must have 3 dims [H][W][B]"))?;
        Self::new(arr, read_wavelengths(wavelengths)?)
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    pub fn wavelengths(&self) -> &[f32] {
        &self.wavelengths
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn bands(&self) -> usize {
        self.values.dim().2
    }

    /// Pixels as rows of a `[H*W][B]` matrix, row-major pixel order.
    pub fn pixels(&self) -> ndarray::ArrayView2<'_, f32> {
        let (h, w, b) = self.values.dim();
        self.values
            .view()
            .into_shape_with_order((h * w, b))
            .expect("standard layout cube")
    }

    pub fn to_ptf(&self) -> PtfTensor {
        PtfTensor::from_array_f32(&self.values)
    }
}

/// Reads one wavelength (nm) per line. Blank lines and `#` comments are skipped.
pub fn read_wavelengths(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f32>()
                .map_err(|e| Error::invalid(format!("{}: bad wavelength {l:?}: {e}", path.display())))
        })
        .collect()
}

pub fn format_wavelengths(wavelengths: &[f32]) -> String {
    wavelengths.iter().map(|w| format!("{w}\n")).collect()
}

/// A false-color image `[H][W][3]` with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage(Array3<f32>);

impl RgbImage {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        if values.dim().2 != 3 {
            return Err(Error::shape(format!("expected 3 channels, found {}", values.dim().2)));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("rgb values must lie in [0, 1]"));
        }
        Ok(Self(values))
    }

    /// Clamps every channel into `[0, 1]` instead of rejecting.
    pub fn clamped(mut values: Array3<f32>) -> Result<Self> {
        values.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(values)
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.0
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.dim().0
    }

    pub fn width(&self) -> usize {
        self.0.dim().1
    }
}

/// Linearly interpolates the cube at wavelength `target`, clamping to the
/// nearest band outside the sampled range. No contrast stretch is applied.
pub fn band_at_wavelength(cube: &HsiCube, target: f32) -> Array2<f32> {
    let wl = cube.wavelengths();
    let last = wl.len() - 1;
    let (lo, hi, t) = if target <= wl[0] {
        (0, 0, 0.0)
    } else if target >= wl[last] {
        (last, last, 0.0)
    } else {
        // wl[i] <= target < wl[i + 1]
        let i = wl.partition_point(|&w| w <= target) - 1;
        let t = (target as f64 - wl[i] as f64) / (wl[i + 1] as f64 - wl[i] as f64);
        (i, i + 1, t)
    };
    let values = cube.values();
    let (h, w, _) = values.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let a = values[[r, c, lo]] as f64;
        if t == 0.0 {
            return a as f32;
        }
        let b = values[[r, c, hi]] as f64;
        (a + t * (b - a)) as f32
    })
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f32], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)
}

/// Maps the 2nd..98th percentile range of `channel` onto `[0, 1]` and clamps.
pub fn contrast_stretch(channel: &Array2<f32>) -> Array2<f32> {
    if channel.is_empty() {
        return channel.clone();
    }
    let mut sorted: Vec<f32> = channel.iter().copied().collect();
    sorted.sort_by(f32::total_cmp);
    let lo = percentile(&sorted, STRETCH_PERCENTILES.0);
    let hi = percentile(&sorted, STRETCH_PERCENTILES.1);
    let span = hi - lo;
    channel.mapv(|v| {
        let v = v as f64;
        if span <= 0.0 {
            // flat channel: split around the plateau
            return if v > lo {
                1.0
            } else if v < lo {
                0.0
            } else {
                0.5
            };
        }
        ((v - lo) / span).clamp(0.0, 1.0) as f32
    })
}

/// Synthesizes the false-color RGB proxy used by the dense scorer.
pub fn interpolate_rgb(cube: &HsiCube) -> Result<RgbImage> {
    if cube.bands() < 2 {
        return Err(Error::invalid("rgb synthesis needs at least 2 bands"));
    }
    let (h, w) = (cube.height(), cube.width());
    let mut out = Array3::<f32>::zeros((h, w, 3));
    for (c, &target) in RGB_WAVELENGTHS.iter().enumerate() {
        let stretched = contrast_stretch(&band_at_wavelength(cube, target));
        out.index_axis_mut(Axis(2), c).assign(&stretched);
    }
    RgbImage::new(out)
}

/// Per-band mean and (floored) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BandStats {
    pub fn compute(cube: &HsiCube) -> Self {
        let pixels = cube.pixels();
        let n = pixels.nrows().max(1) as f64;
        let b = cube.bands();
        let mut mean = vec![0.0f64; b];
        for row in pixels.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; b];
        for row in pixels.rows() {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, cube: &HsiCube) -> Result<HsiCube> {
        if self.mean.len() != cube.bands() {
            return Err(Error::shape("band statistics do not match cube"));
        }
        let mut values = cube.values().clone();
        for mut spectrum in values.lanes_mut(Axis(2)) {
            for ((v, m), s) in spectrum.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        HsiCube::new(values, cube.wavelengths().to_vec())
    }
}

/// Per-band z-score over all pixels.
pub fn normalize_spectra(cube: &HsiCube) -> Result<(HsiCube, BandStats)> {
    let stats = BandStats::compute(cube);
    let out = stats.apply(cube)?;
    Ok((out, stats))
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `std` in place.
pub fn add_gaussian_noise<R: Rng + ?Sized>(
    mut batch: ArrayViewMut2<'_, f32>,
    std: f32,
    rng: &mut R,
) -> Result<()> {
    if !(std >= 0.0) {
        return Err(Error::invalid(format!("noise std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0f32, std).map_err(|e| Error::invalid(e.to_string()))?;
    for v in batch.iter_mut() {
        *v += normal.sample(rng);
    }
    Ok(())
}
