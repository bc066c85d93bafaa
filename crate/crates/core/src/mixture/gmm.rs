//! Full-covariance Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{Error, Result};

/// Total responsibility below which a component counts as empty.
const EMPTY_MASS: f64 = 1e-8;

/// One weighted Gaussian with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
    trace_inv: f64,
}

impl Gaussian {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::shape("covariance does not match mean"));
        }
        if !(weight >= 0.0) {
            return Err(Error::invalid("component weight must be >= 0"));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let trace_inv = inv.trace();
        Ok(Self {
            weight,
            mean,
            covariance,
            chol: l,
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
            trace_inv,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    // forward substitution reads best with explicit indices
    #[allow(clippy::needless_range_loop)]
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        // forward substitution: L z = x - mean
        let d = self.mean.len();
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
            acc += z[i] * z[i];
        }
        acc
    }

    /// Log of the normalized density (weight not included).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }
}

/// A finite Gaussian mixture. Weights sum to one.
#[derive(Debug, Clone)]
pub struct Gmm {
    components: Vec<Gaussian>,
}

impl Gmm {
    pub fn new(mut components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let d = components[0].mean.len();
        if components.iter().any(|c| c.mean.len() != d) {
            return Err(Error::shape("mixture components differ in dimension"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("mixture weights sum to zero"));
        }
        components.iter_mut().for_each(|c| c.weight /= total);
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// `ln Σ_m π_m N(x | μ_m, Σ_m)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(x))
            .collect();
        let lse = log_sum_exp(logs.iter().copied());
        logs.into_iter().map(|l| (l - lse).exp()).collect()
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the mean per-sample objective gain drops below this.
    pub tol: f64,
    /// Ridge added to every covariance.
    pub reg: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            components: 2,
            max_iter: 100,
            tol: 1e-6,
            reg: 1e-4,
        }
    }
}

/// Result of an EM run.
///
/// `log_likelihood[t]` is the objective evaluated at the parameters entering
/// iteration `t`. The objective is the data log-likelihood with each
/// component's density scaled by `exp(-reg/2 · tr Σ⁻¹)`; the ridge update
/// `Σ = S + reg·I` is the exact maximizer of that objective, so it never
/// decreases except right after a re-seed (listed in `reseeds`).
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gmm: Gmm,
    pub log_likelihood: Vec<f64>,
    pub reseeds: Vec<usize>,
    pub converged: bool,
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if acc > u {
            return i;
        }
    }
    last_positive
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn seed_centers<R: Rng + ?Sized>(rows: &[&[f64]], m: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.len();
    let mut centers = vec![pick_weighted(&vec![1.0; n], rng)];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, rows[centers[0]])).collect();
    while centers.len() < m {
        let next = if d2.iter().sum::<f64>() > 0.0 {
            pick_weighted(&d2, rng)
        } else {
            pick_weighted(&vec![1.0; n], rng)
        };
        centers.push(next);
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, rows[next]));
        }
    }
    centers
}

fn weighted_moments(rows: &[&[f64]], resp: &[f64], stride: usize, m: usize, reg: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let mut nk = 0.0;
    let mut mean = DVector::<f64>::zeros(d);
    for (i, r) in rows.iter().enumerate() {
        let w = resp[i * stride + m];
        nk += w;
        for j in 0..d {
            mean[j] += w * r[j];
        }
    }
    mean /= nk;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (i, r) in rows.iter().enumerate() {
        let w = resp[i * stride + m];
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / nk;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += reg;
    }
    (nk, mean, cov)
}

/// Fits a `opts.components`-component mixture to the rows of `samples`.
pub fn fit_gmm_em<R: Rng + ?Sized>(
    samples: ArrayView2<'_, f64>,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<GmmFit> {
    let (n, d) = samples.dim();
    if opts.components == 0 {
        return Err(Error::invalid("need at least one mixture component"));
    }
    if n < opts.components {
        return Err(Error::invalid(format!(
            "{n} samples cannot support {} components",
            opts.components
        )));
    }
    if d == 0 {
        return Err(Error::invalid("samples have zero dimensions"));
    }
    if !(opts.reg >= 0.0) {
        return Err(Error::invalid("covariance ridge must be >= 0"));
    }
    let owned = samples.as_standard_layout();
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| &owned.as_slice().expect("standard layout")[i * d..(i + 1) * d])
        .collect();

    let ones = vec![1.0; n];
    let (_, _, global_cov) = weighted_moments(&rows, &ones, 1, 0, opts.reg);

    let centers = seed_centers(&rows, opts.components, rng);
    let mut comps: Vec<Gaussian> = centers
        .iter()
        .map(|&c| {
            Gaussian::new(
                1.0 / opts.components as f64,
                DVector::from_column_slice(rows[c]),
                global_cov.clone(),
            )
        })
        .collect::<Result<_>>()?;
    let mut reseeded = vec![false; comps.len()];

    let mut history = Vec::new();
    let mut reseeds = Vec::new();
    let mut converged = false;
    let mut just_reseeded = false;
    let mut resp = Vec::new();

    for iter in 0..=opts.max_iter {
        // E-step
        let m = comps.len();
        resp.clear();
        resp.resize(n * m, 0.0);
        let log_w: Vec<f64> = comps
            .iter()
            .map(|c| c.weight.ln() - 0.5 * opts.reg * c.trace_inv)
            .collect();
        let mut ll = 0.0;
        let mut a = vec![0.0; m];
        for (i, r) in rows.iter().enumerate() {
            for (k, c) in comps.iter().enumerate() {
                a[k] = log_w[k] + c.log_pdf(r);
            }
            let lse = log_sum_exp(a.iter().copied());
            ll += lse;
            for k in 0..m {
                resp[i * m + k] = (a[k] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical("EM log-likelihood is not finite".into()));
        }
        if let Some(&prev) = history.last() {
            if !just_reseeded && (ll - prev) < opts.tol * n as f64 {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iter == opts.max_iter {
            break;
        }

        // M-step
        just_reseeded = false;
        let mut next: Vec<Option<Gaussian>> = Vec::with_capacity(m);
        let mut empty = Vec::new();
        for k in 0..m {
            let nk: f64 = (0..n).map(|i| resp[i * m + k]).sum();
            if nk <= EMPTY_MASS {
                empty.push(k);
                next.push(None);
                continue;
            }
            let (nk, mean, cov) = weighted_moments(&rows, &resp, m, k, opts.reg);
            next.push(Some(Gaussian::new(nk / n as f64, mean, cov)?));
        }
        for &k in empty.iter().rev() {
            if reseeded[k] {
                warn!("mixture component {k} emptied twice; dropping it");
                next.remove(k);
                reseeded.remove(k);
                continue;
            }
            // farthest sample from the surviving components
            let live: Vec<&Gaussian> = next.iter().flatten().collect();
            let far = (0..n)
                .max_by(|&i, &j| {
                    let di = live.iter().map(|c| c.mahalanobis_sq(rows[i])).fold(f64::INFINITY, f64::min);
                    let dj = live.iter().map(|c| c.mahalanobis_sq(rows[j])).fold(f64::INFINITY, f64::min);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("non-empty");
            next[k] = Some(Gaussian::new(
                1.0 / n as f64,
                DVector::from_column_slice(rows[far]),
                global_cov.clone(),
            )?);
            reseeded[k] = true;
            just_reseeded = true;
            reseeds.push(iter);
        }
        let total: f64 = next.iter().flatten().map(|c| c.weight).sum();
        comps = next
            .into_iter()
            .flatten()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
    }

    Ok(GmmFit {
        gmm: Gmm::new(comps)?,
        log_likelihood: history,
        reseeds,
        converged,
    })
}
