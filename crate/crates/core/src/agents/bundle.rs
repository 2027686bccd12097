use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::{mean_of, Support};
use super::{ddqn, dqn, dsac, sac, AgentConfig, AgentError, Algorithm};
use crate::nn::{adam_step, AdamState, DenseNet, Forward, Head, OutputGrad, ScalarAdam};
use crate::replay::{Batch, ReplayBuffer, Transition, ACTION_COUNT};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Networks, optimizers and temperature of one learner.
#[derive(Clone, Debug)]
pub struct AgentBundle<F> {
    pub(crate) config: AgentConfig,
    pub(crate) support: Option<Support<F>>,
    pub(crate) critic: DenseNet<F>,
    pub(crate) critic_target: DenseNet<F>,
    pub(crate) critic_opt: AdamState<F>,
    pub(crate) actor: Option<DenseNet<F>>,
    pub(crate) actor_opt: Option<AdamState<F>>,
    pub(crate) log_alpha: f64,
    pub(crate) alpha_opt: ScalarAdam,
    pub(crate) epsilon: f64,
    pub(crate) env_steps: u64,
    pub(crate) updates: u64,
    pub(crate) last_critic_grad_norm: f64,
    pub(crate) last_actor_grad_norm: f64,
}

/// Losses and gradient norms of one update round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub critic_grad_norm: f64,
    pub actor_loss: Option<f64>,
    pub actor_grad_norm: Option<f64>,
    pub alpha: Option<f64>,
}

/// Emitted by [`train_step`] for every environment step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub env_step: u64,
    pub buffer_len: usize,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub update: Option<UpdateStats>,
}

pub(crate) fn critic_head(config: &AgentConfig) -> Head {
    if config.algorithm.is_distributional() {
        Head::Categorical {
            actions: ACTION_COUNT,
            atoms: config.atoms,
        }
    } else {
        Head::Linear {
            outputs: ACTION_COUNT,
        }
    }
}

pub(crate) fn critic_lr(config: &AgentConfig) -> f64 {
    if config.algorithm.is_actor_critic() {
        config.critic_lr
    } else {
        config.lr
    }
}

impl<F: Scalar> AgentBundle<F> {
    pub fn new<R: Rng + ?Sized>(
        config: AgentConfig,
        input_width: usize,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let critic = DenseNet::new(input_width, &config.hidden, critic_head(&config), rng);
        let actor = config.algorithm.is_actor_critic().then(|| {
            DenseNet::new(
                input_width,
                &config.hidden,
                Head::Policy {
                    actions: ACTION_COUNT,
                },
                rng,
            )
        });
        Self::from_parts(config, critic.clone(), critic, actor)
    }

    /// Assemble from explicit networks with fresh optimizer state.
    pub fn from_parts(
        config: AgentConfig,
        critic: DenseNet<F>,
        critic_target: DenseNet<F>,
        actor: Option<DenseNet<F>>,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if critic.topology() != critic_target.topology() {
            return bad("target topology differs from the online critic");
        }
        if critic.head() != critic_head(&config) {
            return bad("critic head does not match the algorithm");
        }
        if actor.is_some() != config.algorithm.is_actor_critic() {
            return bad("actor network present only for actor-critic algorithms");
        }
        if let Some(a) = &actor {
            if a.head()
                != (Head::Policy {
                    actions: ACTION_COUNT,
                })
                || a.input_width() != critic.input_width()
            {
                return bad("actor must be a 3-way policy over the critic's input");
            }
        }
        let support = if config.algorithm.is_distributional() {
            Some(Support::new(config.v_min, config.v_max, config.atoms)?)
        } else {
            None
        };
        Ok(Self {
            support,
            critic_opt: AdamState::new(&critic, critic_lr(&config)),
            actor_opt: actor.as_ref().map(|a| AdamState::new(a, config.actor_lr)),
            critic,
            critic_target,
            actor,
            log_alpha: config.initial_alpha.ln(),
            alpha_opt: ScalarAdam::new(config.alpha_lr),
            epsilon: config.epsilon_start,
            env_steps: 0,
            updates: 0,
            last_critic_grad_norm: 0.0,
            last_actor_grad_norm: 0.0,
            config,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn support(&self) -> Option<&Support<F>> {
        self.support.as_ref()
    }

    pub fn input_width(&self) -> usize {
        self.critic.input_width()
    }

    pub fn critic(&self) -> &DenseNet<F> {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut DenseNet<F> {
        &mut self.critic
    }

    pub fn critic_target(&self) -> &DenseNet<F> {
        &self.critic_target
    }

    pub fn critic_target_mut(&mut self) -> &mut DenseNet<F> {
        &mut self.critic_target
    }

    pub fn actor(&self) -> Option<&DenseNet<F>> {
        self.actor.as_ref()
    }

    pub fn actor_mut(&mut self) -> Option<&mut DenseNet<F>> {
        self.actor.as_mut()
    }

    pub fn critic_optimizer(&self) -> &AdamState<F> {
        &self.critic_opt
    }

    pub fn actor_optimizer(&self) -> Option<&AdamState<F>> {
        self.actor_opt.as_ref()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<(), AgentError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(AgentError::InvalidConfig(format!(
                "alpha {alpha} must be positive"
            )));
        }
        self.log_alpha = alpha.ln();
        Ok(())
    }

    pub fn alpha_optimizer(&self) -> &ScalarAdam {
        &self.alpha_opt
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    /// Apply the configured schedule for the given training episode.
    pub fn schedule_epsilon(&mut self, episode: usize, total_episodes: usize) {
        self.epsilon = self.config.epsilon(episode, total_episodes);
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub(crate) fn expect(
        &self,
        operation: &'static str,
        allowed: &[Algorithm],
    ) -> Result<(), AgentError> {
        if allowed.contains(&self.algorithm()) {
            Ok(())
        } else {
            Err(AgentError::WrongAlgorithm {
                operation,
                expected: allowed.iter().map(|a| a.name()).next().unwrap_or(""),
                got: self.algorithm(),
            })
        }
    }

    /// Expected action values in euros from a critic forward pass.
    pub(crate) fn values_from(&self, fwd: &Forward<F>) -> Array2<F> {
        match &self.support {
            Some(support) => categorical_means(&fwd.outputs, support),
            None => fwd.outputs.mapv(|o| o * F::of(self.config.value_scale)),
        }
    }

    /// Expected action values in euros, one row per input.
    pub fn action_values(&self, features: ArrayView2<F>) -> Result<Array2<F>, AgentError> {
        let fwd = self.critic.forward(features)?;
        Ok(self.values_from(&fwd))
    }

    /// Policy probabilities; `None` for value-based learners.
    pub fn policy_probs(&self, features: ArrayView2<F>) -> Result<Option<Array2<F>>, AgentError> {
        match &self.actor {
            Some(actor) => Ok(Some(actor.forward(features)?.outputs)),
            None => Ok(None),
        }
    }

    /// Scores whose argmax is the greedy action: policy probabilities for
    /// actor-critic learners, action values otherwise.
    pub fn greedy_scores(&self, features: ArrayView2<F>) -> Result<Array2<F>, AgentError> {
        match self.policy_probs(features)? {
            Some(p) => Ok(p),
            None => self.action_values(features),
        }
    }

    pub fn greedy_actions(&self, features: ArrayView2<F>) -> Result<Vec<usize>, AgentError> {
        let scores = self.greedy_scores(features)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect())
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        features: &[F],
        mode: Mode,
        rng: &mut R,
    ) -> Result<usize, AgentError> {
        let x = ArrayView2::from_shape((1, features.len()), features)
            .map_err(|e| AgentError::Nn(crate::nn::NnError::Shape(e.to_string())))?;
        if mode == Mode::Eval {
            return Ok(self.greedy_actions(x)?[0]);
        }
        if let Some(probs) = self.policy_probs(x)? {
            return Ok(sample_categorical(
                probs.row(0).iter().map(|p| p.as_f64()),
                rng,
            ));
        }
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return Ok(rng.random_range(0..ACTION_COUNT));
        }
        Ok(self.greedy_actions(x)?[0])
    }

    /// One round of updates on a sampled batch: the critic, then the actor
    /// and temperature for actor-critic learners.
    pub fn update(&mut self, batch: &Batch<F>) -> Result<UpdateStats, AgentError> {
        let mut stats = UpdateStats {
            critic_loss: 0.0,
            critic_grad_norm: 0.0,
            actor_loss: None,
            actor_grad_norm: None,
            alpha: None,
        };
        match self.algorithm() {
            Algorithm::Dqn => stats.critic_loss = dqn::dqn_update(self, batch)?,
            Algorithm::Ddqn => stats.critic_loss = ddqn::ddqn_update(self, batch)?,
            Algorithm::Sac => {
                stats.critic_loss = sac::sac_critic_update(self, batch)?;
                stats.actor_loss = Some(sac::sac_actor_update(self, batch)?);
                stats.alpha = Some(sac::temperature_update(self, batch)?);
            }
            Algorithm::Dsac => {
                stats.critic_loss = dsac::dsac_critic_update(self, batch)?;
                let (beta, rho) = (self.config.beta, self.config.rho);
                stats.actor_loss = Some(dsac::dsac_actor_update(self, batch, beta, rho)?);
                stats.alpha = Some(sac::temperature_update(self, batch)?);
            }
            Algorithm::Fqi => {
                return Err(AgentError::WrongAlgorithm {
                    operation: "online update",
                    expected: "dqn",
                    got: Algorithm::Fqi,
                })
            }
        }
        stats.critic_grad_norm = self.last_critic_grad_norm;
        if stats.actor_loss.is_some() {
            stats.actor_grad_norm = Some(self.last_actor_grad_norm);
        }
        self.updates += 1;
        Ok(stats)
    }
}

/// Store the transition and, once warm and on cadence, update.
pub fn train_step<F: Scalar, R: Rng + ?Sized>(
    bundle: &mut AgentBundle<F>,
    transition: Transition<F>,
    buffer: &mut ReplayBuffer<F>,
    rng: &mut R,
) -> Result<Diagnostics, AgentError> {
    buffer.push(transition)?;
    bundle.env_steps += 1;
    let cfg = &bundle.config;
    let due = buffer.len() >= cfg.effective_warmup()
        && bundle.env_steps.is_multiple_of(cfg.update_every as u64);
    let update = if due {
        let batch = buffer.sample(cfg.batch_size, rng)?;
        Some(bundle.update(&batch)?)
    } else {
        None
    };
    Ok(Diagnostics {
        env_step: bundle.env_steps,
        buffer_len: buffer.len(),
        epsilon: bundle.epsilon,
        alpha: bundle.algorithm().is_actor_critic().then(|| bundle.alpha()),
        update,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<F: PartialOrd>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best: Option<(usize, F)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match &best {
            Some((_, b)) if !(v > *b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

fn sample_categorical<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
        if p > 0.0 {
            last = i;
        }
    }
    last
}

/// Per-action means of grouped categorical outputs, shape `batch x actions`.
pub(crate) fn categorical_means<F: Scalar>(probs: &Array2<F>, support: &Support<F>) -> Array2<F> {
    let n = support.len();
    let actions = probs.ncols() / n;
    Array2::from_shape_fn((probs.nrows(), actions), |(i, a)| {
        let row = probs.row(i);
        let slice = row.as_slice().map(|s| &s[a * n..(a + 1) * n]);
        match slice {
            Some(s) => mean_of(s, support),
            None => mean_of(
                &row.iter().skip(a * n).take(n).copied().collect::<Vec<_>>(),
                support,
            ),
        }
    })
}

/// Backpropagate, clip, and take one Adam step. Returns the gradient norm
/// before clipping.
pub(crate) fn apply_gradient<F: Scalar>(
    net: &mut DenseNet<F>,
    opt: &mut AdamState<F>,
    fwd: &Forward<F>,
    grad: OutputGrad<F>,
    clip: f64,
) -> Result<f64, AgentError> {
    let mut grads = net.backward(fwd, grad)?;
    let norm = if clip > 0.0 {
        grads.clip_global_norm(F::of(clip))
    } else {
        grads.global_norm()
    };
    adam_step(net, &grads, opt)?;
    Ok(norm.as_f64())
}

/// Small bundle for tests elsewhere in the crate; zero weights make every
/// output tie.
#[cfg(test)]
pub(crate) fn bundle_for_tests(
    algorithm: Algorithm,
    width: usize,
    zero_weights: bool,
) -> AgentBundle<f64> {
    use rand::SeedableRng;
    let config = AgentConfig {
        algorithm,
        hidden: vec![8, 8],
        batch_size: 8,
        buffer_capacity: 64,
        ..AgentConfig::default()
    };
    if zero_weights {
        let critic = DenseNet::zeros(width, &config.hidden, critic_head(&config));
        let actor = algorithm.is_actor_critic().then(|| {
            DenseNet::zeros(
                width,
                &config.hidden,
                Head::Policy {
                    actions: ACTION_COUNT,
                },
            )
        });
        AgentBundle::from_parts(config, critic.clone(), critic, actor).unwrap()
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        AgentBundle::new(config, width, &mut rng).unwrap()
    }
}
