use ndarray::Array2;

use super::bundle::AgentBundle;
use super::ddqn::categorical_critic_step;
use super::dist::{mean_of, var_of_dist, Support};
use super::sac::{actor_gradients, apply_actor};
use super::{AgentError, Algorithm};
use crate::nn::Grads;
use crate::replay::Batch;
use crate::Scalar;

/// Projected soft distributional targets: for each next action `a'` the
/// atoms `r + gamma (z_i - alpha ln pi(a'|s'))` carry mass
/// `pi(a'|s') p_i(s', a')`.
pub fn dsac_critic_targets<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<Array2<F>, AgentError> {
    bundle.expect("dsac_critic_targets", &[Algorithm::Dsac])?;
    let support = bundle
        .support
        .as_ref()
        .expect("distributional agent has a support");
    let n = support.len();
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    let pi = actor.forward(batch.next_states.view())?;
    let log_pi = pi.log_outputs.as_ref().expect("policy head");
    let next = bundle
        .critic_target
        .forward(batch.next_states.view())?
        .outputs;
    let gamma = F::of(bundle.config.gamma);
    let alpha = F::of(bundle.alpha());
    let mut out = Array2::zeros((batch.len(), n));
    for i in 0..batch.len() {
        let r = F::of(batch.rewards[i]);
        let mut row = out.row_mut(i);
        let row = row.as_slice_mut().expect("fresh array is contiguous");
        if batch.dones[i] {
            support.deposit(row, r, F::one());
            continue;
        }
        for a in 0..pi.outputs.ncols() {
            let w = pi.outputs[[i, a]];
            if w == F::zero() {
                continue;
            }
            let bonus = alpha * log_pi[[i, a]];
            for (j, &z) in support.atoms().iter().enumerate() {
                support.deposit(row, r + gamma * (z - bonus), w * next[[i, a * n + j]]);
            }
        }
    }
    Ok(out)
}

pub fn dsac_critic_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<f64, AgentError> {
    bundle.expect("dsac_critic_update", &[Algorithm::Dsac])?;
    let targets = dsac_critic_targets(bundle, batch)?;
    categorical_critic_step(bundle, batch, &targets)
}

/// `mean(Z(s, a)) + beta * VaR_rho(Z(s, a))` for every row and action.
pub fn risk_adjusted_values<F: Scalar>(
    probs: &Array2<F>,
    support: &Support<F>,
    beta: f64,
    rho: f64,
) -> Array2<F> {
    let n = support.len();
    let (beta, rho) = (F::of(beta), F::of(rho));
    Array2::from_shape_fn((probs.nrows(), probs.ncols() / n), |(i, a)| {
        let p: Vec<F> = (0..n).map(|j| probs[[i, a * n + j]]).collect();
        mean_of(&p, support) + beta * var_of_dist(&p, support, rho)
    })
}

fn expected_values<F: Scalar>(probs: &Array2<F>, support: &Support<F>) -> Array2<F> {
    let n = support.len();
    Array2::from_shape_fn((probs.nrows(), probs.ncols() / n), |(i, a)| {
        let p: Vec<F> = (0..n).map(|j| probs[[i, a * n + j]]).collect();
        mean_of(&p, support)
    })
}

/// Risk-sensitive actor loss and gradients, valued by [`risk_adjusted_values`].
pub fn dsac_actor_gradients<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
    beta: f64,
    rho: f64,
) -> Result<(f64, Grads<F>), AgentError> {
    bundle.expect("dsac_actor_update", &[Algorithm::Dsac])?;
    if !(beta >= 0.0) || !(rho > 0.0 && rho <= 1.0) {
        return Err(AgentError::InvalidConfig(format!(
            "beta {beta} / rho {rho} out of range"
        )));
    }
    let support = bundle
        .support
        .as_ref()
        .expect("distributional agent has a support");
    let probs = bundle.critic.forward(batch.states.view())?.outputs;
    let values = risk_adjusted_values(&probs, support, beta, rho);
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    actor_gradients(actor, batch.states.view(), &values, bundle.alpha())
}

/// Actor loss and gradients valued by the plain expectation of `Z`.
pub fn dsac_expectation_actor_gradients<F: Scalar>(
    bundle: &AgentBundle<F>,
    batch: &Batch<F>,
) -> Result<(f64, Grads<F>), AgentError> {
    bundle.expect("dsac_expectation_actor_gradients", &[Algorithm::Dsac])?;
    let support = bundle
        .support
        .as_ref()
        .expect("distributional agent has a support");
    let probs = bundle.critic.forward(batch.states.view())?.outputs;
    let values = expected_values(&probs, support);
    let actor = bundle
        .actor
        .as_ref()
        .expect("actor-critic agent has an actor");
    actor_gradients(actor, batch.states.view(), &values, bundle.alpha())
}

pub fn dsac_actor_update<F: Scalar>(
    bundle: &mut AgentBundle<F>,
    batch: &Batch<F>,
    beta: f64,
    rho: f64,
) -> Result<f64, AgentError> {
    let (loss, grads) = dsac_actor_gradients(bundle, batch, beta, rho)?;
    apply_actor(bundle, grads)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ddqn::ddqn_targets;
    use crate::agents::sac::policy_bundle;
    use crate::agents::AgentConfig;
    use crate::replay::Transition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(done: bool, reward: f64) -> Batch<f64> {
        Batch::from_transitions([&Transition {
            state: vec![1.0],
            action: 0,
            reward,
            next_state: vec![1.0],
            done,
        }])
    }

    fn random_critic(b: &mut AgentBundle<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in b.critic_mut().layers_mut() {
            l.bias.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        }
        for l in b.critic_target_mut().layers_mut() {
            l.bias.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        }
    }

    #[test]
    fn deterministic_policy_matches_distributional_target() {
        let mut dsac = policy_bundle(Algorithm::Dsac, [0.0, 0.0, 900.0]);
        dsac.set_alpha(1e-300).unwrap();
        random_critic(&mut dsac, 4);
        // a DDQN whose target net strongly prefers action 2 as well
        let c = AgentConfig {
            algorithm: Algorithm::Ddqn,
            hidden: vec![],
            ..AgentConfig::default()
        };
        let mut target = dsac.critic_target().clone();
        let mut bias = target.layers()[0].bias.clone();
        bias[2 * 11 + 10] += 100.0;
        target.layers_mut()[0].bias.assign(&bias);
        let mut ddqn = AgentBundle::from_parts(c, target.clone(), target.clone(), None).unwrap();
        *dsac.critic_target_mut() = target;
        ddqn.config.gamma = dsac.config.gamma;
        let b = batch(false, 123.0);
        let x = dsac_critic_targets(&dsac, &b).unwrap();
        let y = ddqn_targets(&ddqn, &b).unwrap();
        for (u, v) in x.iter().zip(y.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_collapses_to_reward() {
        let mut b = policy_bundle(Algorithm::Dsac, [0.4, -2.0, 1.0]);
        random_critic(&mut b, 9);
        let m = dsac_critic_targets(&b, &batch(true, -3000.0)).unwrap();
        let mut e = vec![0.0; 11];
        e[2] = 1.0;
        assert_eq!(m.row(0).to_vec(), e);
    }

    #[test]
    fn identical_mixture_components_project_like_one() {
        let mut b = policy_bundle(Algorithm::Dsac, [0.0, 0.0, -800.0]);
        b.set_alpha(1e-300).unwrap();
        let mut bias = vec![0.0; 33];
        for a in 0..2 {
            bias[a * 11 + 4] = 1.0;
            bias[a * 11 + 7] = 2.0;
        }
        b.critic_target_mut().layers_mut()[0]
            .bias
            .assign(&ndarray::Array1::from(bias));
        let mixed = dsac_critic_targets(&b, &batch(false, 250.0)).unwrap();
        let mut single = b.clone();
        single.actor_mut().unwrap().layers_mut()[0]
            .bias
            .assign(&ndarray::arr1(&[0.0, -800.0, -800.0]));
        let one = dsac_critic_targets(&single, &batch(false, 250.0)).unwrap();
        for (u, v) in mixed.iter().zip(one.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_matches_expectation_loss_bitwise() {
        let c = AgentConfig {
            algorithm: Algorithm::Dsac,
            hidden: vec![16, 8],
            ..AgentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b: AgentBundle<f64> = AgentBundle::new(c, 4, &mut rng).unwrap();
        let items: Vec<_> = (0..32)
            .map(|_| Transition {
                state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: rng.random_range(0..3),
                reward: rng.random_range(-20.0..20.0),
                next_state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: false,
            })
            .collect();
        let batch = Batch::from_transitions(&items);
        let (l1, g1) = dsac_actor_gradients(&b, &batch, 0.0, 0.1).unwrap();
        let (l2, g2) = dsac_expectation_actor_gradients(&b, &batch).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (x, y) in g1.layers.iter().zip(&g2.layers) {
            for (u, v) in x
                .weights
                .iter()
                .chain(&x.bias)
                .zip(y.weights.iter().chain(&y.bias))
            {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    fn risky_critic(b: &mut AgentBundle<f64>) {
        // action 0: point mass at 0; action 1: +-1000 w.p. 1/2; action 2: same as 0
        let mut bias = vec![-800.0; 33];
        bias[5] = 0.0;
        bias[11 + 4] = 0.0;
        bias[11 + 6] = 0.0;
        bias[22 + 5] = 0.0;
        b.critic_mut().layers_mut()[0]
            .bias
            .assign(&ndarray::Array1::from(bias));
    }

    #[test]
    fn var_penalty_values() {
        let mut b = policy_bundle(Algorithm::Dsac, [0.0; 3]);
        risky_critic(&mut b);
        let probs = b
            .critic()
            .forward(ndarray::arr2(&[[1.0]]).view())
            .unwrap()
            .outputs;
        let v = risk_adjusted_values(&probs, b.support().unwrap(), 3.0, 0.1);
        assert!(v[[0, 0]].abs() < 1e-9);
        assert!((v[[0, 1]] + 3000.0).abs() < 1e-9);
    }

    #[test]
    fn risk_weight_moves_policy_to_safe_action() {
        let mut b = policy_bundle(Algorithm::Dsac, [0.0; 3]);
        risky_critic(&mut b);
        b.actor_opt.as_mut().unwrap().lr = 1e-2;
        let p1 = |b: &AgentBundle<f64>| {
            b.policy_probs(ndarray::arr2(&[[1.0]]).view())
                .unwrap()
                .unwrap()[[0, 1]]
        };
        let before = p1(&b);
        for _ in 0..50 {
            dsac_actor_update(&mut b, &batch(false, 0.0), 3.0, 0.1).unwrap();
        }
        assert!(p1(&b) < before / 2.0);
    }

    #[test]
    fn identical_distributions_keep_uniform_policy() {
        let mut b = policy_bundle(Algorithm::Dsac, [0.0; 3]);
        let mut bias = vec![0.0; 33];
        for a in 0..3 {
            bias[a * 11 + 1] = 2.0;
            bias[a * 11 + 9] = 1.0;
        }
        b.critic_mut().layers_mut()[0]
            .bias
            .assign(&ndarray::Array1::from(bias));
        for _ in 0..20 {
            dsac_actor_update(&mut b, &batch(false, 0.0), 50.0, 0.1).unwrap();
        }
        let p = b
            .policy_probs(ndarray::arr2(&[[1.0]]).view())
            .unwrap()
            .unwrap();
        for a in 0..3 {
            assert!((p[[0, a]] - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
