use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{DenseNet, Grads, Layer, NnError};
use crate::Scalar;

/// Adam moments for every parameter of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub(crate) m: Vec<Layer<F>>,
    pub(crate) v: Vec<Layer<F>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &DenseNet<F>, lr: f64) -> Self {
        let zeros = net.zero_grads().layers;
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn moments(&self) -> (&[Layer<F>], &[Layer<F>]) {
        (&self.m, &self.v)
    }

    pub fn from_parts(m: Vec<Layer<F>>, v: Vec<Layer<F>>, step: u64, lr: f64) -> Self {
        Self {
            m,
            v,
            step,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort before any
/// parameter or moment is touched.
pub fn adam_step<F: Scalar>(
    net: &mut DenseNet<F>,
    grads: &Grads<F>,
    state: &mut AdamState<F>,
) -> Result<(), NnError> {
    if grads.layers.len() != net.layers().len() || state.m.len() != grads.layers.len() {
        return Err(NnError::TopologyMismatch);
    }
    for (i, (g, p)) in grads.layers.iter().zip(net.layers()).enumerate() {
        if g.weights.dim() != p.weights.dim() || g.bias.dim() != p.bias.dim() {
            return Err(NnError::Shape(format!(
                "gradient of layer {i} has the wrong shape"
            )));
        }
    }
    if let Some(layer) = grads.first_non_finite() {
        return Err(NnError::NonFiniteGradient { layer });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (F::of(state.beta1), F::of(state.beta2));
    let c1 = F::one() - b1.powi(t);
    let c2 = F::one() - b2.powi(t);
    let lr = F::of(state.lr);
    let eps = F::of(state.eps);
    let one = F::one();
    let update = |p: &mut F, &g: &F, m: &mut F, v: &mut F| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    Ok(())
}

/// Adam for a single scalar parameter (the log-temperature).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub step: u64,
    pub lr: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            m: 0.0,
            v: 0.0,
            step: 0,
            lr,
        }
    }

    /// Returns the updated parameter.
    pub fn step(&mut self, param: f64, grad: f64) -> f64 {
        self.step += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.step as i32));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.step as i32));
        param - self.lr * m_hat / (v_hat.sqrt() + 1e-8)
    }
}
