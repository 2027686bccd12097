use ndarray::Array2;

use super::bundle::{apply_gradient, argmax, categorical_means, AgentBundle};
use super::{AgentError, Algorithm};
use crate::nn::{polyak_update, OutputGrad};
use crate::replay::Batch;
use crate::Scalar;

/// Projected distributional targets, one row per transition. The next
/// action is greedy under the target network's means.
pub fn ddqn_targets<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<Array2<F>, AgentError> {
    bundle.expect("ddqn_targets", &[Algorithm::Ddqn])?;
    let support = bundle
        .support
        .as_ref()
        .expect("distributional agent has a support");
    let n = support.len();
    let next = bundle
        .critic_target
        .forward(batch.next_states.view())?
        .outputs;
    let means = categorical_means(&next, support);
    let gamma = F::of(bundle.config.gamma);
    let mut out = Array2::zeros((batch.len(), n));
    for i in 0..batch.len() {
        let r = F::of(batch.rewards[i]);
        let mut row = vec![F::zero(); n];
        if batch.dones[i] {
            support.deposit(&mut row, r, F::one());
        } else {
            let a = argmax(means.row(i).iter().copied());
            for (j, &z) in support.atoms().iter().enumerate() {
                support.deposit(&mut row, r + gamma * z, next[[i, a * n + j]]);
            }
        }
        out.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    Ok(out)
}

pub fn ddqn_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("ddqn_update", &[Algorithm::Ddqn])?;
    let targets = ddqn_targets(bundle, batch)?;
    categorical_critic_step(bundle, batch, &targets)
}

/// Cross-entropy step of `Z(s, a)` towards `targets`, then a soft target
/// update. Returns the mean KL divergence before the step.
pub(crate) fn categorical_critic_step<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
    targets: &Array2<F>,
) -> Result<f64, AgentError> {
    let n = targets.ncols();
    let fwd = bundle.critic.forward(batch.states.view())?;
    let log_p = fwd.log_outputs.as_ref().expect("categorical head");
    let inv_b = F::one() / F::of(batch.len() as f64);
    let mut grad = Array2::zeros(fwd.logits.raw_dim());
    let mut loss = 0.0;
    for (i, &a) in batch.actions.iter().enumerate() {
        for j in 0..n {
            let m = targets[[i, j]];
            let col = a * n + j;
            if m > F::zero() {
                loss += (m * (m.ln() - log_p[[i, col]])).as_f64();
            }
            grad[[i, col]] = (fwd.outputs[[i, col]] - m) * inv_b;
        }
    }
    loss /= batch.len() as f64;
    if !loss.is_finite() {
        return Err(AgentError::NonFiniteLoss("critic"));
    }
    bundle.last_critic_grad_norm = apply_gradient(
        &mut bundle.critic,
        &mut bundle.critic_opt,
        &fwd,
        OutputGrad::Logits(grad),
        bundle.config.grad_clip,
    )?;
    polyak_update(
        &mut bundle.critic_target,
        &bundle.critic,
        F::of(bundle.config.tau),
    )?;
    Ok(loss)
}
