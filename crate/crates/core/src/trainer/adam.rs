use ndarray::NdFloat;

use crate::error::{Error, Result};

/// Adam moment estimates, one buffer pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: NdFloat> AdamState<F> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl<F: NdFloat> Default for AdamState<F> {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<F: NdFloat>(
    params: &mut [&mut [F]],
    grads: &[Vec<F>],
    state: &mut AdamState<F>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::shape("parameter and gradient shapes differ"));
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![F::zero(); g.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != grads.len() || state.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
        return Err(Error::shape("optimizer state does not match parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let cast = |x: f64| F::from(x).expect("finite");
    let (fb1, fb2, f1b1, f1b2) = (cast(b1), cast(b2), cast(1.0 - b1), cast(1.0 - b2));
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = fb1 * m[i] + f1b1 * g[i];
            v[i] = fb2 * v[i] + f1b2 * g[i] * g[i];
            let m_hat = m[i].to_f64().expect("finite") / c1;
            let v_hat = v[i].to_f64().expect("finite") / c2;
            let update = lr * m_hat / (v_hat.sqrt() + state.eps);
            p[i] -= cast(update);
        }
    }
    Ok(())
}
