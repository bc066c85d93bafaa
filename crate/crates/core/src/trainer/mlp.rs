use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A per-pixel spectral classifier that can be trained by the refinement loop.
///
/// `forward` returns class probabilities and whatever the implementation
/// needs to run `backward`, which maps a gradient with respect to the raw
/// class scores onto one flat gradient per parameter tensor, in the same order
/// as `parameters_mut`.
pub trait SpectralClassifier<F: NdFloat> {
    type Cache;

    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn forward(&self, batch: ArrayView2<'_, F>) -> Result<(Array2<F>, Self::Cache)>;
    fn backward(&self, cache: &Self::Cache, dscores: ArrayView2<'_, F>) -> Vec<Vec<F>>;
    fn parameters_mut(&mut self) -> Vec<&mut [F]>;
}

/// Fully connected layer; `weight` is `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Multilayer perceptron: affine + ReLU hidden layers, affine output, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
}

/// Inputs seen by each layer during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    inputs: Vec<Array2<F>>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::invalid(format!("bad layer widths {widths:?}")));
    }
    Ok(())
}

impl<F: NdFloat> Mlp<F> {
    /// He-normal weights and zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| {
                let scale = (2.0 / w[0] as f64).sqrt();
                let weight = Array2::from_shape_fn((w[0], w[1]), |_| {
                    let z: f64 = StandardNormal.sample(rng);
                    F::from(z * scale).expect("finite")
                });
                Dense {
                    weight,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("mlp needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != l.bias.len() {
                return Err(Error::shape(format!("layer {i}: bias does not match weight")));
            }
            if i > 0 && layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::shape(format!("layer {i}: input width mismatch")));
            }
        }
        if layers
            .iter()
            .any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::invalid("mlp parameters must be finite"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.nrows()];
        w.extend(self.layers.iter().map(|l| l.weight.ncols()));
        w
    }

    /// Raw class scores plus the per-layer inputs.
    pub fn scores(&self, batch: ArrayView2<'_, F>) -> Result<(Array2<F>, MlpCache<F>)> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "mlp expects {} inputs, got {}",
                self.input_dim(),
                batch.ncols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = batch.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias.view().insert_axis(Axis(0));
            if i < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            inputs.push(h);
            h = z;
        }
        Ok((h, MlpCache { inputs }))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: NdFloat>(scores: &mut Array2<F>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

impl<F: NdFloat> SpectralClassifier<F> for Mlp<F> {
    type Cache = MlpCache<F>;

    fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    fn forward(&self, batch: ArrayView2<'_, F>) -> Result<(Array2<F>, MlpCache<F>)> {
        let (mut s, cache) = self.scores(batch)?;
        softmax_rows(&mut s);
        Ok((s, cache))
    }

    fn backward(&self, cache: &MlpCache<F>, dscores: ArrayView2<'_, F>) -> Vec<Vec<F>> {
        let mut grads = vec![Vec::new(); 2 * self.layers.len()];
        let mut g = dscores.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let dw = input.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            grads[2 * i] = dw.iter().copied().collect();
            grads[2 * i + 1] = db.to_vec();
            if i > 0 {
                let mut gi = g.dot(&self.layers[i].weight.t());
                // ReLU mask: the input to layer i is the activation of layer i - 1
                ndarray::Zip::from(&mut gi)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= F::zero() {
                            *d = F::zero();
                        }
                    });
                g = gi;
            }
        }
        grads
    }

    fn parameters_mut(&mut self) -> Vec<&mut [F]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}
