use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{encode_features, EnvError, Environment, FeatureNorm, Feedback};
use crate::market::{Day, MINUTES_PER_DAY, MINUTES_PER_QUARTER_HOUR};

/// Discharge is blocked only once the counter exceeds the cap by more than
/// accumulated rounding; `n_cyc == n_max` still allows discharging.
pub const CYCLE_TOLERANCE: f64 = 1e-9;

/// A battery within this distance of empty (full) cannot discharge (charge).
pub const SOC_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    /// Maximum (dis)charging power, MW.
    pub power_mw: f64,
    /// Usable capacity, MWh.
    pub capacity_mwh: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    /// Hours per decision step.
    pub dt_hours: f64,
    pub max_daily_cycles: f64,
    pub cycle_constraint: bool,
    pub initial_soc: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            power_mw: 1.0,
            capacity_mwh: 2.0,
            eta_charge: 0.9,
            eta_discharge: 0.9,
            dt_hours: 1.0 / 60.0,
            max_daily_cycles: 1.1,
            cycle_constraint: false,
            initial_soc: 0.5,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.power_mw) {
            return bad("power_mw must be positive");
        }
        if !pos(self.capacity_mwh) {
            return bad("capacity_mwh must be positive");
        }
        if !(pos(self.eta_charge) && self.eta_charge <= 1.0) {
            return bad("eta_charge must lie in (0, 1]");
        }
        if !(pos(self.eta_discharge) && self.eta_discharge <= 1.0) {
            return bad("eta_discharge must lie in (0, 1]");
        }
        if !pos(self.dt_hours) {
            return bad("dt_hours must be positive");
        }
        if self.cycle_constraint && !pos(self.max_daily_cycles) {
            return bad("max_daily_cycles must be positive when the constraint is enabled");
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return bad("initial_soc must lie in [0, 1]");
        }
        Ok(())
    }

    /// SoC gained by one full-power charging step.
    pub fn charge_delta(&self) -> f64 {
        self.power_mw * self.eta_charge * self.dt_hours / self.capacity_mwh
    }

    /// SoC lost by one full-power discharging step.
    pub fn discharge_delta(&self) -> f64 {
        self.power_mw / self.eta_discharge * self.dt_hours / self.capacity_mwh
    }

    /// Cycle counter increment of one full-power discharging step.
    pub fn cycle_delta(&self) -> f64 {
        self.power_mw * self.dt_hours / self.capacity_mwh
    }

    pub fn feature_width(&self) -> usize {
        if self.cycle_constraint {
            10
        } else {
            9
        }
    }
}

/// Discrete action set; the index order is the network output order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Discharge = 0,
    Idle = 1,
    Charge = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Discharge, Action::Idle, Action::Charge];

    pub fn from_index(i: usize) -> Result<Self, EnvError> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(EnvError::InvalidActionIndex(i))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn power(self, config: &BatteryConfig) -> f64 {
        match self {
            Action::Discharge => -config.power_mw,
            Action::Idle => 0.0,
            Action::Charge => config.power_mw,
        }
    }

    pub fn from_power(u: f64, config: &BatteryConfig) -> Result<Self, EnvError> {
        Self::ALL
            .into_iter()
            .find(|a| a.power(config) == u)
            .ok_or(EnvError::InvalidAction(u))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Minute of the day, 0..1440.
    pub minute: usize,
    /// Minute of the quarter-hour, 0..15.
    pub minute_of_quarter: u32,
    /// Quarter-hour of the day, 0..96.
    pub quarter_hour: u32,
    pub month: u32,
    pub soc: f64,
    pub forecast_price: f64,
    /// Cycles consumed so far today.
    pub cycles: f64,
}

impl EnvState {
    fn at(minute: usize, day: &Day, soc: f64, cycles: f64) -> Self {
        let m = minute % MINUTES_PER_DAY;
        Self {
            minute,
            minute_of_quarter: (m % MINUTES_PER_QUARTER_HOUR) as u32,
            quarter_hour: (m / MINUTES_PER_QUARTER_HOUR) as u32,
            month: day.month(),
            soc,
            forecast_price: day.forecast(m.min(MINUTES_PER_DAY - 1)),
            cycles,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    /// Euros earned this step.
    pub reward: f64,
    pub requested_action: f64,
    pub executed_action: f64,
    pub done: bool,
}

/// Overrides a discharge request with idle once the daily cycle budget is
/// exceeded. Charging and idling pass through unchanged.
pub fn backup_filter(u: f64, cycles: f64, config: &BatteryConfig) -> f64 {
    if config.cycle_constraint && u < 0.0 && cycles > config.max_daily_cycles + CYCLE_TOLERANCE {
        0.0
    } else {
        u
    }
}

/// Executed power after the backup controller and the SoC bounds: a
/// request that cannot move energy at all (charging a full battery,
/// discharging an empty one) becomes idle.
pub(crate) fn executed_power(u: f64, soc: f64, cycles: f64, config: &BatteryConfig) -> f64 {
    let a = backup_filter(u, cycles, config);
    if (a > 0.0 && soc >= 1.0 - SOC_TOLERANCE) || (a < 0.0 && soc <= SOC_TOLERANCE) {
        0.0
    } else {
        a
    }
}

/// SoC after executing power `a` for one step, clipped to `[0, 1]`.
pub(crate) fn next_soc(soc: f64, a: f64, config: &BatteryConfig) -> f64 {
    let soc_temp = soc
        + (a.max(0.0) * config.eta_charge + a.min(0.0) / config.eta_discharge) * config.dt_hours
            / config.capacity_mwh;
    soc_temp.clamp(0.0, 1.0)
}

pub(crate) fn next_cycles(cycles: f64, a: f64, config: &BatteryConfig) -> f64 {
    cycles + a.min(0.0).abs() * config.dt_hours / config.capacity_mwh
}

/// One-minute transition.
pub(crate) fn transition(
    state: &EnvState,
    u: f64,
    day: &Day,
    config: &BatteryConfig,
) -> StepOutcome {
    let a = executed_power(u, state.soc, state.cycles, config);
    let soc = next_soc(state.soc, a, config);
    let cycles = next_cycles(state.cycles, a, config);
    let price = day.settlement(state.minute);
    let reward = -a * config.dt_hours * price;
    let minute = state.minute + 1;
    StepOutcome {
        next_state: EnvState::at(minute, day, soc, cycles),
        reward,
        requested_action: u,
        executed_action: a,
        done: minute >= MINUTES_PER_DAY,
    }
}

/// One episode (one day) of the battery MDP.
#[derive(Clone, Debug)]
pub struct BatteryEnv {
    day: Day,
    config: BatteryConfig,
    state: EnvState,
    done: bool,
    norm: FeatureNorm,
}

impl BatteryEnv {
    pub fn reset(day: &Day, config: &BatteryConfig, initial_soc: f64) -> Result<Self, EnvError> {
        config.validate()?;
        if !(0.0..=1.0).contains(&initial_soc) {
            return Err(EnvError::InvalidSoc(initial_soc));
        }
        if day.records().len() != MINUTES_PER_DAY {
            return Err(EnvError::IncompleteDay(day.records().len()));
        }
        Ok(Self {
            day: day.clone(),
            config: config.clone(),
            state: EnvState::at(0, day, initial_soc, 0.0),
            done: false,
            norm: FeatureNorm::default(),
        })
    }

    /// Attach the normalization used by [`Environment::observe`].
    pub fn with_norm(mut self, norm: FeatureNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn day(&self) -> &Day {
        &self.day
    }

    pub fn config(&self) -> &BatteryConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Apply a requested power `u` in MW.
    pub fn step(&mut self, u: f64) -> Result<StepOutcome, EnvError> {
        Action::from_power(u, &self.config)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let out = transition(&self.state, u, &self.day, &self.config);
        self.state = out.next_state;
        self.done = out.done;
        Ok(out)
    }

    pub fn step_action(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        self.step(action.power(&self.config))
    }
}

impl Environment for BatteryEnv {
    fn feature_width(&self) -> usize {
        self.config.feature_width()
    }

    fn observe(&self) -> Vec<f64> {
        encode_features(&self.state, &self.norm, &self.config)
    }

    fn step_index(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<Feedback, EnvError> {
        let out = self.step_action(Action::from_index(action)?)?;
        Ok(Feedback {
            reward: out.reward,
            next_features: self.observe(),
            terminal: out.done,
            episode_end: out.done,
        })
    }
}
