use std::fmt;

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ddqn,
    Sac,
    Dsac,
    Fqi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Dqn, Self::Ddqn, Self::Sac, Self::Dsac, Self::Fqi];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::Ddqn => "ddqn",
            Self::Sac => "sac",
            Self::Dsac => "dsac",
            Self::Fqi => "fqi",
        }
    }

    /// Has a policy network and a temperature.
    pub fn is_actor_critic(self) -> bool {
        matches!(self, Self::Sac | Self::Dsac)
    }

    /// Critic outputs a categorical return distribution.
    pub fn is_distributional(self) -> bool {
        matches!(self, Self::Ddqn | Self::Dsac)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| AgentError::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub tau: f64,
    /// Learning rate of the DQN and DDQN value networks.
    pub lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// Tune the temperature towards `target_entropy_ratio * ln 3`.
    pub auto_temperature: bool,
    pub target_entropy_ratio: f64,
    /// Weight of the VaR term in the risk-sensitive actor loss.
    pub beta: f64,
    /// VaR confidence level.
    pub rho: f64,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions stored before the first update; 0 means one batch.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub update_every: usize,
    /// Scalar critics predict values in units of this many euros.
    pub value_scale: f64,
    /// Global gradient norm bound; 0 disables clipping.
    pub grad_clip: f64,
    /// Outer fitted-Q iterations per training episode.
    pub fqi_iterations: usize,
    /// Full-dataset gradient steps per fitted-Q iteration.
    pub fqi_fit_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dsac,
            gamma: 0.9995,
            tau: 0.1,
            lr: 5e-4,
            actor_lr: 2e-5,
            critic_lr: 1e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1.0,
            auto_temperature: true,
            target_entropy_ratio: 0.5,
            beta: 0.0,
            rho: 0.1,
            atoms: 11,
            v_min: -5000.0,
            v_max: 5000.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
            hidden: vec![256, 128],
            batch_size: 16384,
            buffer_capacity: 1_000_000,
            warmup: 0,
            update_every: 1,
            value_scale: 100.0,
            grad_clip: 10.0,
            fqi_iterations: 400,
            fqi_fit_steps: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho {} outside (0, 1]", self.rho));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta {} is negative", self.beta));
        }
        if !(self.initial_alpha > 0.0) {
            return bad(format!(
                "initial alpha {} must be positive",
                self.initial_alpha
            ));
        }
        for (name, lr) in [
            ("lr", self.lr),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("alpha_lr", self.alpha_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} {lr} must be positive"));
            }
        }
        if self.atoms < 2 || !(self.v_max > self.v_min) {
            return bad(format!(
                "support needs at least 2 atoms and v_min < v_max, got {} on [{}, {}]",
                self.atoms, self.v_min, self.v_max
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_decay_fraction)
        {
            return bad("epsilon schedule values must lie in [0, 1]".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty".into());
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.update_every == 0 {
            return bad("batch size, buffer capacity and update cadence must be positive".into());
        }
        if !(self.value_scale > 0.0) {
            return bad(format!("value scale {} must be positive", self.value_scale));
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("gradient clip {} is negative", self.grad_clip));
        }
        if !(self.target_entropy_ratio >= 0.0 && self.target_entropy_ratio <= 1.0) {
            return bad(format!(
                "target entropy ratio {} outside [0, 1]",
                self.target_entropy_ratio
            ));
        }
        Ok(())
    }

    pub fn effective_warmup(&self) -> usize {
        if self.warmup == 0 {
            self.batch_size
        } else {
            self.warmup.max(self.batch_size)
        }
    }

    /// Linear decay over the first `epsilon_decay_fraction` of episodes.
    pub fn epsilon(&self, episode: usize, total_episodes: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * total_episodes as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy_ratio * (crate::replay::ACTION_COUNT as f64).ln()
    }
}
