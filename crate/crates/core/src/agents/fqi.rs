use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::bundle::apply_gradient;
use super::dqn::bootstrap;
use super::{AgentConfig, AgentError};
use crate::nn::{AdamState, DenseNet, Head, OutputGrad};
use crate::replay::{Batch, ACTION_COUNT};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FqiConfig {
    pub gamma: f64,
    pub lr: f64,
    /// Full-dataset gradient steps per iteration.
    pub fit_steps: usize,
    pub value_scale: f64,
    pub grad_clip: f64,
}

impl From<&AgentConfig> for FqiConfig {
    fn from(c: &AgentConfig) -> Self {
        Self {
            gamma: c.gamma,
            lr: c.lr,
            fit_steps: c.fqi_fit_steps.max(1),
            value_scale: c.value_scale,
            grad_clip: c.grad_clip,
        }
    }
}

impl Default for FqiConfig {
    fn default() -> Self {
        Self::from(&AgentConfig::default())
    }
}

/// Fitted Q-iteration with a persistent network and optimizer.
#[derive(Clone, Debug)]
pub struct FqiTrainer<F> {
    net: DenseNet<F>,
    opt: AdamState<F>,
    config: FqiConfig,
}

#[derive(Clone, Debug)]
pub struct FqiOutcome<F> {
    pub net: DenseNet<F>,
    pub elapsed: Duration,
    pub final_loss: f64,
}

impl<F: Scalar> FqiTrainer<F> {
    pub fn new(net: DenseNet<F>, config: FqiConfig) -> Result<Self, AgentError> {
        if net.head()
            != (Head::Linear {
                outputs: ACTION_COUNT,
            })
        {
            return Err(AgentError::InvalidConfig(
                "fitted Q-iteration needs a 3-output linear head".into(),
            ));
        }
        Ok(Self {
            opt: AdamState::new(&net, config.lr),
            net,
            config,
        })
    }

    pub fn net(&self) -> &DenseNet<F> {
        &self.net
    }

    pub fn into_net(self) -> DenseNet<F> {
        self.net
    }

    /// Action values in euros.
    pub fn values(&self, states: ndarray::ArrayView2<F>) -> Result<Array2<F>, AgentError> {
        let scale = F::of(self.config.value_scale);
        Ok(self.net.forward(states)?.outputs.mapv(|o| o * scale))
    }

    /// Run `iterations` rounds of target recomputation from a frozen copy
    /// followed by regression on the whole dataset. Returns the squared
    /// error (euros) of the last fit step.
    pub fn fit(&mut self, batch: &Batch<F>, iterations: usize) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyDataset);
        }
        if iterations == 0 {
            return Err(AgentError::ZeroIterations);
        }
        let scale = self.config.value_scale;
        let n = batch.len() as f64;
        let mut loss = f64::NAN;
        for _ in 0..iterations {
            let next = self.values(batch.next_states.view())?;
            let targets = bootstrap(&next, batch, self.config.gamma);
            for _ in 0..self.config.fit_steps {
                let fwd = self.net.forward(batch.states.view())?;
                let mut grad = Array2::zeros(fwd.outputs.raw_dim());
                loss = 0.0;
                for (i, (&a, &y)) in batch.actions.iter().zip(&targets).enumerate() {
                    let err = fwd.outputs[[i, a]].as_f64() * scale - y;
                    loss += err * err;
                    grad[[i, a]] = F::of(2.0 * err / scale / n);
                }
                loss /= n;
                if !loss.is_finite() {
                    return Err(AgentError::NonFiniteLoss("fitted Q"));
                }
                apply_gradient(
                    &mut self.net,
                    &mut self.opt,
                    &fwd,
                    OutputGrad::Outputs(grad),
                    self.config.grad_clip,
                )?;
            }
        }
        Ok(loss)
    }
}

/// Fit `init` on a fixed dataset and time it.
pub fn fqi_train<F: Scalar>(
    dataset: &Batch<F>,
    iterations: usize,
    config: &FqiConfig,
    init: DenseNet<F>,
) -> Result<FqiOutcome<F>, AgentError> {
    let start = Instant::now();
    let mut trainer = FqiTrainer::new(init, config.clone())?;
    let final_loss = trainer.fit(dataset, iterations)?;
    Ok(FqiOutcome {
        net: trainer.into_net(),
        elapsed: start.elapsed(),
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(gamma: f64, fit_steps: usize) -> FqiConfig {
        FqiConfig {
            gamma,
            lr: 1e-2,
            fit_steps,
            value_scale: 1.0,
            grad_clip: 0.0,
        }
    }

    fn net() -> DenseNet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        DenseNet::new(2, &[16], Head::Linear { outputs: 3 }, &mut rng)
    }

    fn t(state: [f64; 2], action: usize, reward: f64, next: [f64; 2]) -> Transition<f64> {
        Transition {
            state: state.to_vec(),
            action,
            reward,
            next_state: next.to_vec(),
            done: false,
        }
    }

    #[test]
    fn myopic_fit_regresses_rewards() {
        let data = [
            t([1.0, 0.0], 0, 3.0, [0.0, 1.0]),
            t([0.0, 1.0], 2, -1.0, [1.0, 0.0]),
            t([1.0, 1.0], 1, 0.5, [1.0, 0.0]),
        ];
        let out = fqi_train(
            &Batch::from_transitions(&data),
            1,
            &config(0.0, 2000),
            net(),
        )
        .unwrap();
        let q = out
            .net
            .forward(Batch::from_transitions(&data).states.view())
            .unwrap()
            .outputs;
        assert!((q[[0, 0]] - 3.0).abs() < 1e-3);
        assert!((q[[1, 2]] + 1.0).abs() < 1e-3);
        assert!((q[[2, 1]] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn self_loop_reaches_geometric_sum() {
        // every action loops with reward 1, so Q = 1 / (1 - 0.5) = 2
        let data: Vec<_> = (0..3)
            .map(|a| t([1.0, -1.0], a, 1.0, [1.0, -1.0]))
            .collect();
        let out = fqi_train(
            &Batch::from_transitions(&data),
            200,
            &config(0.5, 100),
            net(),
        )
        .unwrap();
        let q = out.net.predict(&[1.0, -1.0]).unwrap();
        for a in 0..3 {
            assert!((q[a] - 2.0).abs() < 1e-3, "{q}");
        }
    }

    #[test]
    fn preconditions() {
        let data = Batch::from_transitions(&[t([1.0, 0.0], 0, 3.0, [0.0, 1.0])]);
        assert_eq!(
            fqi_train(&data, 0, &config(0.5, 1), net()).unwrap_err(),
            AgentError::ZeroIterations
        );
        assert_eq!(
            fqi_train(&Batch::from_transitions(&[]), 3, &config(0.5, 1), net()).unwrap_err(),
            AgentError::EmptyDataset
        );
        let policy = DenseNet::zeros(2, &[], Head::Policy { actions: 3 });
        assert!(fqi_train(&data, 1, &config(0.5, 1), policy).is_err());
    }
}
