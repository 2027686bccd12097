use rand::{Rng, RngCore};

use super::{EnvError, Environment, Feedback};

/// Single-decision episodes with equal-mean payoffs of different risk.
///
/// Actions marked risky pay `+payoff` or `-payoff` with probability one
/// half each; the others pay exactly zero. Every step is terminal.
#[derive(Clone, Debug)]
pub struct RiskyBandit {
    pub payoff: f64,
    pub risky: [bool; 3],
    features: Vec<f64>,
}

impl RiskyBandit {
    /// Idle (index 1) is safe; charge and discharge are risky.
    pub fn new(payoff: f64, feature_width: usize) -> Self {
        let mut features = vec![0.0; feature_width.max(1)];
        features[0] = 1.0;
        Self {
            payoff,
            risky: [true, false, true],
            features,
        }
    }

    pub fn safe_action(&self) -> Option<usize> {
        self.risky.iter().position(|r| !r)
    }
}

impl Environment for RiskyBandit {
    fn feature_width(&self) -> usize {
        self.features.len()
    }

    fn observe(&self) -> Vec<f64> {
        self.features.clone()
    }

    fn step_index(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<Feedback, EnvError> {
        let risky = *self
            .risky
            .get(action)
            .ok_or(EnvError::InvalidActionIndex(action))?;
        let reward = if risky {
            if rng.random_bool(0.5) {
                self.payoff
            } else {
                -self.payoff
            }
        } else {
            0.0
        };
        Ok(Feedback {
            reward,
            next_features: self.features.clone(),
            terminal: true,
            episode_end: true,
        })
    }
}
