use ndarray::Array2;
use rand::Rng;

use super::gmm::{fit_gmm_em, EmOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Classes with fewer values are kept whole as confident.
    pub min_count: usize,
    /// Component means closer than this count as a degenerate split.
    pub min_gap: f64,
    pub em: EmOptions,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            min_count: 8,
            min_gap: 0.02,
            em: EmOptions {
                components: 2,
                max_iter: 200,
                tol: 1e-8,
                reg: 1e-6,
            },
        }
    }
}

/// Confident and hard members of one class, as indices into that class's
/// value list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassSplit {
    pub confident: Vec<usize>,
    pub hard: Vec<usize>,
    /// True when the fallback kept every member as confident.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfidenceSplit {
    pub classes: Vec<ClassSplit>,
}

fn all_confident(n: usize) -> ClassSplit {
    ClassSplit {
        confident: (0..n).collect(),
        hard: Vec::new(),
        fallback: true,
    }
}

fn split_one<R: Rng + ?Sized>(values: &[f64], opts: &SplitOptions, rng: &mut R) -> Result<ClassSplit> {
    if values.len() < opts.min_count {
        return Ok(all_confident(values.len()));
    }
    let x = Array2::from_shape_vec((values.len(), 1), values.to_vec())
        .map_err(|e| Error::shape(e.to_string()))?;
    let fit = fit_gmm_em(x.view(), &opts.em, rng)?;
    let comps = fit.gmm.components();
    if comps.len() < 2 {
        return Ok(all_confident(values.len()));
    }
    let (high, low) = if comps[0].mean()[0] >= comps[1].mean()[0] {
        (0, 1)
    } else {
        (1, 0)
    };
    if (comps[high].mean()[0] - comps[low].mean()[0]).abs() < opts.min_gap {
        return Ok(all_confident(values.len()));
    }
    let mut split = ClassSplit::default();
    for (i, &v) in values.iter().enumerate() {
        if fit.gmm.responsibilities(&[v])[high] > 0.5 {
            split.confident.push(i);
        } else {
            split.hard.push(i);
        }
    }
    Ok(split)
}

/// Splits each class's best-versus-second-best values with a two-component
/// 1-D mixture. Members whose posterior for the higher-mean component
/// exceeds one half are confident; the rest are hard.
pub fn split_confidence<R: Rng + ?Sized>(
    bvsb_by_class: &[Vec<f64>],
    opts: &SplitOptions,
    rng: &mut R,
) -> Result<ConfidenceSplit> {
    if bvsb_by_class
        .iter()
        .flatten()
        .any(|v| !(0.0..=1.0).contains(v))
    {
        return Err(Error::invalid("confidence values must lie in [0, 1]"));
    }
    let classes = bvsb_by_class
        .iter()
        .map(|vals| split_one(vals, opts, rng))
        .collect::<Result<_>>()?;
    Ok(ConfidenceSplit { classes })
}
