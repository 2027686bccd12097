use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Output transformation applied to the last layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Linear {
        outputs: usize,
    },
    /// One softmax over `atoms` logits per action.
    Categorical {
        actions: usize,
        atoms: usize,
    },
    /// A single softmax over all outputs.
    Policy {
        actions: usize,
    },
}

impl Head {
    pub fn width(&self) -> usize {
        match *self {
            Head::Linear { outputs } => outputs,
            Head::Categorical { actions, atoms } => actions * atoms,
            Head::Policy { actions } => actions,
        }
    }

    /// Column ranges normalized together, if any.
    fn groups(&self) -> Option<(usize, usize)> {
        match *self {
            Head::Linear { .. } => None,
            Head::Categorical { actions, atoms } => Some((actions, atoms)),
            Head::Policy { actions } => Some((1, actions)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

/// Affine map `x W + b` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Layer<F> {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Rectifier MLP with a configurable output head.
#[derive(Clone, Debug)]
pub struct DenseNet<F> {
    layers: Vec<Layer<F>>,
    head: Head,
    id: u64,
}

/// Intermediates of one forward pass, consumed by [`DenseNet::backward`].
#[derive(Clone, Debug)]
pub struct Forward<F> {
    id: u64,
    /// Input followed by every hidden activation.
    activations: Vec<Array2<F>>,
    pub logits: Array2<F>,
    pub outputs: Array2<F>,
    /// Log of the softmax outputs; `None` for linear heads.
    pub log_outputs: Option<Array2<F>>,
}

impl<F> Forward<F> {
    pub fn batch_size(&self) -> usize {
        self.outputs.nrows()
    }

    /// Rectifier on/off pattern of every hidden unit.
    pub(crate) fn relu_pattern(&self) -> Vec<bool>
    where
        F: Scalar,
    {
        self.activations[1..]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > F::zero()))
            .collect()
    }
}

/// Gradient of the loss with respect to the head's outputs or its logits.
#[derive(Clone, Debug)]
pub enum OutputGrad<F> {
    Outputs(Array2<F>),
    Logits(Array2<F>),
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<F> {
    pub layers: Vec<Layer<F>>,
}

impl<F: Scalar> Grads<F> {
    pub fn global_norm(&self) -> F {
        self.layers
            .iter()
            .map(|l| {
                l.weights
                    .iter()
                    .chain(l.bias.iter())
                    .map(|&g| g * g)
                    .sum::<F>()
            })
            .sum::<F>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let k = max_norm / norm;
            for l in &mut self.layers {
                l.weights.mapv_inplace(|g| g * k);
                l.bias.mapv_inplace(|g| g * k);
            }
        }
        norm
    }

    /// Index of the first layer holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.layers.iter().position(|l| {
            l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|g| !g.is_finite())
        })
    }
}

fn relu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

/// Row-wise softmax over `groups` consecutive blocks of `size` columns.
fn grouped_softmax<F: Scalar>(
    logits: &Array2<F>,
    groups: usize,
    size: usize,
) -> (Array2<F>, Array2<F>) {
    let mut probs = logits.clone();
    let mut logp = logits.clone();
    for g in 0..groups {
        let cols = s![.., g * size..(g + 1) * size];
        Zip::from(probs.slice_mut(cols).rows_mut())
            .and(logp.slice_mut(cols).rows_mut())
            .for_each(|mut p, mut lp| {
                let max = lp.fold(F::neg_infinity(), |m, &v| m.max(v));
                lp.mapv_inplace(|v| v - max);
                let lse = lp.iter().map(|&v| v.exp()).sum::<F>().ln();
                lp.mapv_inplace(|v| v - lse);
                p.assign(&lp.mapv(F::exp));
            });
    }
    (probs, logp)
}

impl<F: Scalar> DenseNet<F> {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases alike.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], head: Head, rng: &mut R) -> Self {
        let mut net = Self::zeros(input, hidden, head);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weights.nrows() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| F::of(rng.random_range(-bound..=bound)));
            layer
                .bias
                .mapv_inplace(|_| F::of(rng.random_range(-bound..=bound)));
        }
        net
    }

    pub fn zeros(input: usize, hidden: &[usize], head: Head) -> Self {
        let sizes: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(head.width()))
            .collect();
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            layers,
            head,
            id: fresh_id(),
        }
    }

    pub fn from_layers(layers: Vec<Layer<F>>, head: Head) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != l.bias.len() {
                return Err(NnError::Shape(format!(
                    "layer {i}: bias length differs from width"
                )));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weights.nrows() != l.weights.ncols() {
                    return Err(NnError::Shape(format!(
                        "layers {i} and {} do not chain",
                        i + 1
                    )));
                }
            }
        }
        if layers.last().map(|l| l.weights.ncols()) != Some(head.width()) {
            return Err(NnError::Shape("last layer width differs from head".into()));
        }
        Ok(Self {
            layers,
            head,
            id: fresh_id(),
        })
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.head.width()
    }

    pub fn topology(&self) -> Topology {
        Topology {
            input: self.input_width(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.weights.ncols())
                .collect(),
            head: self.head,
        }
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        self.id = fresh_id();
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: ArrayView2<F>) -> Result<Forward<F>, NnError> {
        if input.ncols() != self.input_width() {
            return Err(NnError::InputWidth {
                expected: self.input_width(),
                got: input.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_owned());
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
                activations.push(z);
            } else {
                logits = Some(z);
            }
        }
        let logits = logits.expect("at least one layer");
        let (outputs, log_outputs) = match self.head.groups() {
            None => (logits.clone(), None),
            Some((groups, size)) => {
                let (p, lp) = grouped_softmax(&logits, groups, size);
                (p, Some(lp))
            }
        };
        Ok(Forward {
            id: self.id,
            activations,
            logits,
            outputs,
            log_outputs,
        })
    }

    /// Outputs for a single input row.
    pub fn predict(&self, input: &[F]) -> Result<Array1<F>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        Ok(self.forward(x)?.outputs.row(0).to_owned())
    }

    /// Exact parameter gradients of the scalar loss whose gradient with
    /// respect to the outputs (or logits) is supplied.
    pub fn backward(&self, fwd: &Forward<F>, grad: OutputGrad<F>) -> Result<Grads<F>, NnError> {
        if fwd.id != self.id {
            return Err(NnError::StaleCache);
        }
        let mut delta = match grad {
            OutputGrad::Logits(g) => g,
            OutputGrad::Outputs(g) => self.softmax_backward(fwd, g),
        };
        if delta.dim() != fwd.logits.dim() {
            return Err(NnError::Shape(format!(
                "output gradient {:?} vs outputs {:?}",
                delta.dim(),
                fwd.logits.dim()
            )));
        }
        let mut grads: Vec<Layer<F>> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let a_in = &fwd.activations[i];
            grads.push(Layer {
                weights: a_in.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                let mut d = delta.dot(&self.layers[i].weights.t());
                Zip::from(&mut d).and(a_in).for_each(|d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
                delta = d;
            }
        }
        grads.reverse();
        Ok(Grads { layers: grads })
    }

    /// Chain rule through the softmax: `dL/dz_j = p_j (g_j - sum_k p_k g_k)`.
    fn softmax_backward(&self, fwd: &Forward<F>, mut g: Array2<F>) -> Array2<F> {
        let Some((groups, size)) = self.head.groups() else {
            return g;
        };
        if g.dim() != fwd.outputs.dim() {
            return g;
        }
        for k in 0..groups {
            let cols = s![.., k * size..(k + 1) * size];
            Zip::from(g.slice_mut(cols).rows_mut())
                .and(fwd.outputs.slice(cols).rows())
                .for_each(|mut gr, pr| {
                    let dot = gr.iter().zip(pr.iter()).map(|(&a, &b)| a * b).sum::<F>();
                    Zip::from(&mut gr)
                        .and(&pr)
                        .for_each(|gv, &p| *gv = p * (*gv - dot));
                });
        }
        g
    }

    pub fn zero_grads(&self) -> Grads<F> {
        Grads {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Soft target tracking: `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update<F: Scalar>(
    target: &mut DenseNet<F>,
    online: &DenseNet<F>,
    tau: F,
) -> Result<(), NnError> {
    if target.topology() != online.topology() {
        return Err(NnError::TopologyMismatch);
    }
    let keep = F::one() - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers.iter()) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = tau * o + keep * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + keep * *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_net_linear_outputs_zero() {
        let net = DenseNet::<f64>::zeros(4, &[5, 3], Head::Linear { outputs: 3 });
        let out = net.forward(Array2::ones((2, 4)).view()).unwrap();
        assert!(out.outputs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_net_policy_is_uniform() {
        let net = DenseNet::<f64>::zeros(4, &[5], Head::Policy { actions: 3 });
        let out = net.forward(Array2::ones((1, 4)).view()).unwrap();
        for &p in &out.outputs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let net = DenseNet::<f64>::new(
            3,
            &[8, 4],
            Head::Categorical {
                actions: 3,
                atoms: 5,
            },
            &mut rng(),
        );
        let x = array![[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]];
        let out = net.forward(x.view()).unwrap();
        assert_eq!(out.outputs.row(0), out.outputs.row(1));
        for a in 0..3 {
            let s: f64 = out.outputs.slice(s![0, a * 5..(a + 1) * 5]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch() {
        let net = DenseNet::<f64>::zeros(4, &[2], Head::Linear { outputs: 1 });
        let err = net.forward(Array2::zeros((1, 3)).view()).unwrap_err();
        assert_eq!(
            err,
            NnError::InputWidth {
                expected: 4,
                got: 3
            }
        );
    }

    #[test]
    fn sum_of_outputs_bias_gradient_is_ones() {
        let net = DenseNet::<f64>::new(3, &[6], Head::Linear { outputs: 4 }, &mut rng());
        let fwd = net.forward(Array2::ones((1, 3)).view()).unwrap();
        let g = net
            .backward(&fwd, OutputGrad::Outputs(Array2::ones((1, 4))))
            .unwrap();
        assert_eq!(g.layers[1].bias, Array1::<f64>::ones(4));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = DenseNet::<f64>::new(3, &[6, 5], Head::Policy { actions: 3 }, &mut rng());
        let fwd = net.forward(Array2::ones((2, 3)).view()).unwrap();
        let g = net
            .backward(&fwd, OutputGrad::Outputs(Array2::zeros((2, 3))))
            .unwrap();
        assert_eq!(g, net.zero_grads());
    }

    #[test]
    fn stale_cache_detected() {
        let mut net = DenseNet::<f64>::new(3, &[4], Head::Linear { outputs: 2 }, &mut rng());
        let fwd = net.forward(Array2::ones((1, 3)).view()).unwrap();
        net.layers_mut()[0].bias[0] += 1.0;
        let err = net
            .backward(&fwd, OutputGrad::Outputs(Array2::ones((1, 2))))
            .unwrap_err();
        assert_eq!(err, NnError::StaleCache);
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = array![[1.0, 2.0, 3.0, -4.0]];
        let shifted = logits.mapv(|v: f64| v + 123.0);
        let (a, _) = grouped_softmax(&logits, 2, 2);
        let (b, _) = grouped_softmax(&shifted, 2, 2);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn polyak_endpoints_and_scalar_case() {
        let mut r = rng();
        let online = DenseNet::<f64>::new(2, &[3], Head::Linear { outputs: 1 }, &mut r);
        let original = DenseNet::<f64>::new(2, &[3], Head::Linear { outputs: 1 }, &mut r);

        let mut t = original.clone();
        polyak_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.layers(), online.layers());

        let mut t = original.clone();
        polyak_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.layers(), original.layers());

        let mut t = DenseNet::<f64>::zeros(1, &[], Head::Linear { outputs: 1 });
        let mut o = t.clone();
        o.layers_mut()[0].weights[[0, 0]] = 1.0;
        polyak_update(&mut t, &o, 0.1).unwrap();
        assert_eq!(t.layers()[0].weights[[0, 0]], 0.1);
    }

    #[test]
    fn polyak_topology_mismatch() {
        let mut a = DenseNet::<f64>::zeros(2, &[3], Head::Linear { outputs: 1 });
        let b = DenseNet::<f64>::zeros(2, &[4], Head::Linear { outputs: 1 });
        assert_eq!(
            polyak_update(&mut a, &b, 0.5).unwrap_err(),
            NnError::TopologyMismatch
        );
    }

    #[test]
    fn f32_networks_work() {
        let net = DenseNet::<f32>::new(3, &[4], Head::Policy { actions: 3 }, &mut rng());
        let p = net.predict(&[0.1, 0.2, 0.3]).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-6);
    }
}
