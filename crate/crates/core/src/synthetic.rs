//! Seeded synthetic scenes with known ground truth.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::LabelMap;
use crate::prep::HsiCube;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub bands: usize,
    /// Voronoi sites; each class owns at least one.
    pub regions: usize,
    /// Width of each class's spectral bump, in bands.
    pub bump_width: f64,
    pub bump_height: f64,
    pub baseline: f64,
    /// Per-band within-class noise.
    pub noise_std: f64,
    pub first_wavelength: f32,
    pub wavelength_step: f32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            classes: 4,
            bands: 16,
            regions: 12,
            bump_width: 1.5,
            bump_height: 1.0,
            baseline: 0.2,
            noise_std: 0.3,
            first_wavelength: 400.0,
            wavelength_step: 40.0,
        }
    }
}

/// A cube, its ground truth and the noiseless class spectra.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cube: HsiCube,
    pub gt: LabelMap,
    /// `[K][B]` mean spectrum per class.
    pub class_means: Array2<f32>,
}

impl SyntheticScene {
    pub fn class_names(&self) -> Vec<String> {
        (0..self.class_means.nrows()).map(|k| format!("class{k}")).collect()
    }

    /// Smallest distance between two class means divided by the
    /// within-class standard deviation of one band.
    pub fn separation(&self, noise_std: f64) -> f64 {
        let m = &self.class_means;
        let mut best = f64::INFINITY;
        for a in 0..m.nrows() {
            for b in a + 1..m.nrows() {
                let d: f64 = m
                    .row(a)
                    .iter()
                    .zip(m.row(b))
                    .map(|(x, y)| ((x - y) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(d);
            }
        }
        best / noise_std
    }
}

/// Class spectra are Gaussian bumps centred at evenly spaced bands.
pub fn class_spectra(cfg: &SceneConfig) -> Array2<f32> {
    let spacing = cfg.bands as f64 / cfg.classes as f64;
    Array2::from_shape_fn((cfg.classes, cfg.bands), |(k, b)| {
        let centre = (k as f64 + 0.5) * spacing;
        let z = (b as f64 - centre) / cfg.bump_width;
        (cfg.baseline + cfg.bump_height * (-0.5 * z * z).exp()) as f32
    })
}

/// Builds a Voronoi label layout and draws per-pixel spectra around the
/// class means.
pub fn generate_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<SyntheticScene> {
    if cfg.height == 0 || cfg.width == 0 || cfg.bands < 2 {
        return Err(Error::invalid("scene needs a non-empty grid and at least 2 bands"));
    }
    if cfg.classes == 0 || cfg.classes > cfg.regions || cfg.classes >= u16::MAX as usize {
        return Err(Error::invalid("need 1 <= classes <= regions"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.bump_width > 0.0) {
        return Err(Error::invalid("noise_std must be >= 0 and bump_width > 0"));
    }
    let sites: Vec<(f64, f64, u16)> = (0..cfg.regions)
        .map(|i| {
            let r = rng.random_range(0.0..cfg.height as f64);
            let c = rng.random_range(0.0..cfg.width as f64);
            // the first `classes` sites cover every class once
            let k = if i < cfg.classes {
                i
            } else {
                rng.random_range(0..cfg.classes)
            };
            (r, c, k as u16)
        })
        .collect();
    let gt = Array2::from_shape_fn((cfg.height, cfg.width), |(r, c)| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        sites
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - y).powi(2) + (a.1 - x).powi(2);
                let db = (b.0 - y).powi(2) + (b.1 - x).powi(2);
                da.total_cmp(&db)
            })
            .expect("at least one site")
            .2
    });
    let means = class_spectra(cfg);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut values = Array3::<f32>::zeros((cfg.height, cfg.width, cfg.bands));
    for ((r, c, b), v) in values.indexed_iter_mut() {
        let k = gt[[r, c]] as usize;
        *v = means[[k, b]] + noise.sample(rng) as f32;
    }
    let wavelengths = (0..cfg.bands)
        .map(|i| cfg.first_wavelength + cfg.wavelength_step * i as f32)
        .collect();
    Ok(SyntheticScene {
        cube: HsiCube::new(values, wavelengths)?,
        gt: LabelMap::new(gt, cfg.classes)?,
        class_means: means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_scene_shape_and_coverage() {
        let cfg = SceneConfig::default();
        let s = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(s.cube.values().dim(), (64, 64, 16));
        let mut seen = [false; 4];
        s.gt.values().iter().for_each(|&l| seen[l as usize] = true);
        assert!(seen.iter().all(|&x| x));
        assert!(s.separation(cfg.noise_std) >= 3.0);
        assert_eq!(s.cube.wavelengths()[15], 1000.0);
    }

    #[test]
    fn seeded() {
        let cfg = SceneConfig::default();
        let a = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.cube, b.cube);
        assert_eq!(a.gt, b.gt);
    }
}
