use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Principal axes of a sample set.
///
/// `components` holds `q` orthonormal rows in descending eigenvalue order.
/// Each row's largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub components: Array2<f64>,
    pub eigenvalues: Array1<f64>,
}

/// Fits PCA on the rows of `samples` (`n x B`), keeping `q` components.
/// The covariance uses the unbiased `n - 1` normalization.
pub fn fit_pca(samples: ArrayView2<'_, f64>, q: usize) -> Result<PcaModel> {
    let (n, b) = samples.dim();
    if q == 0 || q > b {
        return Err(Error::invalid(format!("need 1 <= q <= {b}, got {q}")));
    }
    if n < q + 1 {
        return Err(Error::invalid(format!(
            "pca with q = {q} needs at least {} samples, got {n}",
            q + 1
        )));
    }
    let mean = samples.mean_axis(Axis(0)).expect("non-empty");
    let mut cov = DMatrix::<f64>::zeros(b, b);
    let mut centered = vec![0.0; b];
    for row in samples.rows() {
        for (c, (x, m)) in centered.iter_mut().zip(row.iter().zip(mean.iter())) {
            *c = x - m;
        }
        for i in 0..b {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..b {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..b {
        for j in i..b {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let mut components = Array2::<f64>::zeros((q, b));
    let mut eigenvalues = Array1::<f64>::zeros(q);
    for (row, &idx) in order.iter().take(q).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let norm = v.norm();
        for j in 0..b {
            components[[row, j]] = sign * v[j] / norm;
        }
        eigenvalues[row] = eig.eigenvalues[idx].max(0.0);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "pca expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let centered = &x - &self.mean;
        Ok(self.components.dot(&centered))
    }

    /// Projects every row of `xs` (`n x B`) to an `n x q` matrix.
    pub fn project_rows(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "pca expects {} inputs, got {}",
                self.input_dim(),
                xs.ncols()
            )));
        }
        let centered = &xs - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.t()))
    }
}
