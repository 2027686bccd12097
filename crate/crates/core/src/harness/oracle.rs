use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{executed_power, next_cycles, next_soc, Action, BatteryConfig, CYCLE_TOLERANCE};
use crate::market::{Day, MINUTES_PER_DAY};

pub const DEFAULT_SOC_RESOLUTION: usize = 201;

/// Value tables are kept every this many minutes and rebuilt in between
/// during the forward pass.
const BLOCK: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Realized profit of `actions` under the exact dynamics, euros.
    pub profit: f64,
    pub actions: Vec<Action>,
    pub final_soc: f64,
    pub cycles: f64,
    pub resolution: usize,
}

/// Perfect-foresight optimum of one day by backward induction.
///
/// The SoC axis is a uniform grid of `resolution` points with linear
/// interpolation between them. With the cycle cap enabled the number of
/// discharging steps taken so far is an extra, exact state dimension.
/// Actions are then recovered by a forward pass that applies the exact
/// battery dynamics from the configured initial SoC, so replaying them in
/// the environment reproduces `profit`.
pub fn dp_oracle(
    day: &Day,
    config: &BatteryConfig,
    resolution: usize,
) -> Result<OracleSolution, HarnessError> {
    config.validate()?;
    let min_delta = config.charge_delta().min(config.discharge_delta());
    let minimum = ((1.0 / min_delta).ceil() as usize + 1).max(2);
    if resolution < 2 || 1.0 / (resolution - 1) as f64 > min_delta {
        return Err(HarnessError::TooCoarse {
            resolution,
            minimum,
        });
    }
    let dp = Dp::new(day, config, resolution);

    let mut checkpoints = vec![Vec::new(); MINUTES_PER_DAY / BLOCK + 1];
    let mut v = vec![0.0; dp.layers * dp.grid];
    checkpoints[MINUTES_PER_DAY / BLOCK] = v.clone();
    for t in (0..MINUTES_PER_DAY).rev() {
        v = dp.backup(t, &v);
        if t % BLOCK == 0 {
            checkpoints[t / BLOCK] = v.clone();
        }
    }

    let mut soc = config.initial_soc;
    let mut count = 0usize;
    let mut cycles = 0.0;
    let mut profit = 0.0;
    let mut actions = Vec::with_capacity(MINUTES_PER_DAY);
    for block in 0..MINUTES_PER_DAY / BLOCK {
        let start = block * BLOCK;
        // tables[i] holds V at minute start + 1 + i
        let mut tables = vec![checkpoints[block + 1].clone()];
        for t in (start + 1..start + BLOCK).rev() {
            let next = dp.backup(t, tables.last().expect("non-empty"));
            tables.push(next);
        }
        tables.reverse();
        for (i, t) in (start..start + BLOCK).enumerate() {
            let next = &tables[i];
            let mut best: Option<(f64, Action, f64, f64)> = None;
            for action in [Action::Idle, Action::Charge, Action::Discharge] {
                let a = executed_power(action.power(config), soc, cycles, config);
                let s = next_soc(soc, a, config);
                let r = -a * config.dt_hours * day.settlement(t);
                let c = count + usize::from(a < 0.0);
                let q = r + dp.interpolate(next, c.min(dp.layers - 1), s);
                if best.is_none_or(|(bq, ..)| q > bq) {
                    best = Some((q, action, a, r));
                }
            }
            let (_, action, a, r) = best.expect("three candidates");
            actions.push(action);
            profit += r;
            soc = next_soc(soc, a, config);
            cycles = next_cycles(cycles, a, config);
            count += usize::from(a < 0.0);
        }
    }
    Ok(OracleSolution {
        profit,
        actions,
        final_soc: soc,
        cycles,
        resolution,
    })
}

struct Dp<'a> {
    day: &'a Day,
    config: &'a BatteryConfig,
    grid: usize,
    /// Cycle counter after `d` discharging steps, accumulated like the
    /// environment does.
    cycles: Vec<f64>,
    layers: usize,
}

impl<'a> Dp<'a> {
    fn new(day: &'a Day, config: &'a BatteryConfig, grid: usize) -> Self {
        let mut cycles = vec![0.0];
        if config.cycle_constraint {
            let discharge = Action::Discharge.power(config);
            while cycles.len() <= MINUTES_PER_DAY {
                let last = *cycles.last().expect("non-empty");
                if last > config.max_daily_cycles + CYCLE_TOLERANCE {
                    break;
                }
                cycles.push(next_cycles(last, discharge, config));
            }
        }
        Self {
            day,
            config,
            grid,
            layers: cycles.len(),
            cycles,
        }
    }

    fn soc_at(&self, k: usize) -> f64 {
        k as f64 / (self.grid - 1) as f64
    }

    fn interpolate(&self, v: &[f64], layer: usize, soc: f64) -> f64 {
        let row = &v[layer * self.grid..(layer + 1) * self.grid];
        let pos = soc.clamp(0.0, 1.0) * (self.grid - 1) as f64;
        let k = (pos.floor() as usize).min(self.grid - 2);
        let w = pos - k as f64;
        (1.0 - w) * row[k] + w * row[k + 1]
    }

    /// `V_t` from `V_{t+1}`.
    fn backup(&self, t: usize, next: &[f64]) -> Vec<f64> {
        let price = self.day.settlement(t);
        let dt = self.config.dt_hours;
        let mut out = vec![f64::NEG_INFINITY; self.layers * self.grid];
        for d in 0..self.layers {
            // the cycle counter does not matter without the cap
            let cyc = if self.config.cycle_constraint {
                self.cycles[d]
            } else {
                0.0
            };
            for k in 0..self.grid {
                let soc = self.soc_at(k);
                let mut best = f64::NEG_INFINITY;
                for action in Action::ALL {
                    let a = executed_power(action.power(self.config), soc, cyc, self.config);
                    let s = next_soc(soc, a, self.config);
                    let layer = (d + usize::from(a < 0.0 && self.config.cycle_constraint))
                        .min(self.layers - 1);
                    let q = -a * dt * price + self.interpolate(next, layer, s);
                    best = best.max(q);
                }
                out[d * self.grid + k] = best;
            }
        }
        out
    }
}
