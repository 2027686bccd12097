use ndarray::{Array2, ArrayView2};

use super::bundle::AgentBundle;
use super::dqn::scalar_critic_step;
use super::{AgentError, Algorithm};
use crate::nn::{DenseNet, Grads, OutputGrad};
use crate::replay::Batch;
use crate::Scalar;

/// Soft targets `r + gamma * sum_a' pi(a'|s') (Q'(s', a') - alpha ln pi(a'|s'))`.
pub fn sac_critic_targets<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<Vec<f64>, AgentError> {
    bundle.expect("sac_critic_targets", &[Algorithm::Sac])?;
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    let pi = actor.forward(batch.next_states.view())?;
    let log_pi = pi.log_outputs.as_ref().expect("policy head");
    let q_next = bundle.values_from(&bundle.critic_target.forward(batch.next_states.view())?);
    let alpha = bundle.alpha();
    Ok((0..batch.len())
        .map(|i| {
            let r = batch.rewards[i];
            if batch.dones[i] {
                return r;
            }
            let soft: f64 = (0..q_next.ncols())
                .map(|a| {
                    pi.outputs[[i, a]].as_f64()
                        * (q_next[[i, a]].as_f64() - alpha * log_pi[[i, a]].as_f64())
                })
                .sum();
            r + bundle.config.gamma * soft
        })
        .collect())
}

pub fn sac_critic_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("sac_critic_update", &[Algorithm::Sac])?;
    let targets = sac_critic_targets(bundle, batch)?;
    scalar_critic_step(bundle, batch, &targets)
}

/// Policy step against the online critic's action values.
pub fn sac_actor_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("sac_actor_update", &[Algorithm::Sac])?;
    let values = bundle.values_from(&bundle.critic.forward(batch.states.view())?);
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    let (loss, grads) = actor_gradients(actor, batch.states.view(), &values, bundle.alpha())?;
    apply_actor(bundle, grads)?;
    Ok(loss)
}

/// Loss `mean_s sum_a pi(a|s) (alpha ln pi(a|s) - v(s, a))` and its
/// parameter gradients.
pub(crate) fn actor_gradients<F: Scalar>(
    actor: &DenseNet<F>,
    states: ArrayView2<F>,
    values: &Array2<F>,
    alpha: f64,
) -> Result<(f64, Grads<F>), AgentError> {
    let fwd = actor.forward(states)?;
    let log_pi = fwd.log_outputs.as_ref().expect("policy head");
    let alpha = F::of(alpha);
    let inv_b = F::one() / F::of(fwd.batch_size() as f64);
    let mut grad = Array2::zeros(fwd.logits.raw_dim());
    let mut loss = F::zero();
    for i in 0..fwd.batch_size() {
        let g: Vec<F> = (0..values.ncols())
            .map(|a| alpha * log_pi[[i, a]] - values[[i, a]])
            .collect();
        let row: F = g
            .iter()
            .enumerate()
            .map(|(a, &ga)| fwd.outputs[[i, a]] * ga)
            .sum();
        loss += row;
        for (a, &ga) in g.iter().enumerate() {
            grad[[i, a]] = fwd.outputs[[i, a]] * (ga - row) * inv_b;
        }
    }
    let loss = (loss * inv_b).as_f64();
    if !loss.is_finite() {
        return Err(AgentError::NonFiniteLoss("actor"));
    }
    Ok((loss, actor.backward(&fwd, OutputGrad::Logits(grad))?))
}

pub(crate) fn apply_actor<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    mut grads: Grads<F>,
) -> Result<(), AgentError> {
    let clip = bundle.config.grad_clip;
    let norm = if clip > 0.0 {
        grads.clip_global_norm(F::of(clip))
    } else {
        grads.global_norm()
    };
    let (Some(actor), Some(opt)) = (bundle.actor.as_mut(), bundle.actor_opt.as_mut()) else {
        unreachable!("actor-critic agent has an actor");
    };
    crate::nn::adam_step(actor, &grads, opt)?;
    bundle.last_actor_grad_norm = norm.as_f64();
    Ok(())
}

/// Gradient step on `ln alpha` for `J = mean_s alpha (H(pi(.|s)) - H_target)`.
/// Returns the new temperature; a no-op when tuning is disabled or the
/// entropy is within `1e-12` of the target (Adam would otherwise turn a
/// rounding residue into a full-size step).
pub fn temperature_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("temperature_update", &[Algorithm::Sac, Algorithm::Dsac])?;
    if !bundle.config.auto_temperature {
        return Ok(bundle.alpha());
    }
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    let fwd = actor.forward(batch.states.view())?;
    let log_pi = fwd.log_outputs.as_ref().expect("policy head");
    let entropy = -(&fwd.outputs * log_pi).sum().as_f64() / fwd.batch_size() as f64;
    let gap = entropy - bundle.config.target_entropy();
    if gap.abs() > 1e-12 {
        bundle.log_alpha = bundle
            .alpha_opt
            .step(bundle.log_alpha, bundle.alpha() * gap);
    }
    Ok(bundle.alpha())
}

/// Shared by the SAC and DSAC tests.
#[cfg(test)]
pub(crate) fn policy_bundle(algorithm: Algorithm, logits: [f64; 3]) -> AgentBundle<f64> {
    use super::bundle::critic_head;
    use super::AgentConfig;
    use crate::nn::Head;
    let c = AgentConfig {
        algorithm,
        hidden: vec![],
        value_scale: 1.0,
        ..AgentConfig::default()
    };
    let critic = DenseNet::zeros(1, &[], critic_head(&c));
    let mut actor = DenseNet::zeros(1, &[], Head::Policy { actions: 3 });
    actor.layers_mut()[0].bias.assign(&ndarray::arr1(&logits));
    AgentBundle::from_parts(c, critic.clone(), critic, Some(actor)).unwrap()
}
