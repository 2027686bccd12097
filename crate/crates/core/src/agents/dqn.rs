use ndarray::Array2;

use super::bundle::{apply_gradient, AgentBundle};
use super::{AgentError, Algorithm};
use crate::nn::{polyak_update, OutputGrad};
use crate::replay::Batch;
use crate::Scalar;

/// `r + gamma * max_a Q'(s', a)` in euros, without bootstrap on `done`.
pub fn dqn_targets<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<Vec<f64>, AgentError> {
    bundle.expect("dqn_targets", &[Algorithm::Dqn, Algorithm::Fqi])?;
    let next = bundle.values_from(&bundle.critic_target.forward(batch.next_states.view())?);
    Ok(bootstrap(&next, batch, bundle.config.gamma))
}

pub(crate) fn bootstrap<F: Scalar>(
    next_values: &Array2<F>,
    batch: &Batch<F>,
    gamma: f64,
) -> Vec<f64> {
    (0..batch.len())
        .map(|i| {
            let r = batch.rewards[i];
            if batch.dones[i] {
                r
            } else {
                let best = next_values
                    .row(i)
                    .iter()
                    .fold(F::neg_infinity(), |m, &v| m.max(v));
                r + gamma * best.as_f64()
            }
        })
        .collect()
}

/// One step on the mean squared TD error, then a soft target update.
/// Returns the loss in squared euros before the step.
pub fn dqn_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("dqn_update", &[Algorithm::Dqn])?;
    let targets = dqn_targets(bundle, batch)?;
    scalar_critic_step(bundle, batch, &targets)
}

/// Squared-error regression of `Q(s, a)` onto `targets`. The optimizer sees
/// the loss divided by `value_scale^2`.
pub(crate) fn scalar_critic_step<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
    targets: &[f64],
) -> Result<f64, AgentError> {
    let scale = bundle.config.value_scale;
    let fwd = bundle.critic.forward(batch.states.view())?;
    let n = batch.len() as f64;
    let mut grad = Array2::zeros(fwd.outputs.raw_dim());
    let mut loss = 0.0;
    for (i, (&a, &y)) in batch.actions.iter().zip(targets).enumerate() {
        let err = fwd.outputs[[i, a]].as_f64() * scale - y;
        loss += err * err;
        grad[[i, a]] = F::of(2.0 * err / scale / n);
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(AgentError::NonFiniteLoss("critic"));
    }
    bundle.last_critic_grad_norm = apply_gradient(
        &mut bundle.critic,
        &mut bundle.critic_opt,
        &fwd,
        OutputGrad::Outputs(grad),
        bundle.config.grad_clip,
    )?;
    polyak_update(
        &mut bundle.critic_target,
        &bundle.critic,
        F::of(bundle.config.tau),
    )?;
    Ok(loss)
}
