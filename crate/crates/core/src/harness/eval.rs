use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{AgentBundle, Mode};
use crate::env::{Action, BatteryConfig, BatteryEnv, EnvState, Environment, FeatureNorm};
use crate::market::{PriceSeries, MINUTES_PER_DAY};
use crate::Scalar;

/// Width of the hourly-profit histogram bins, euros.
pub const HOURLY_BIN_EUR: f64 = 10.0;

/// Chooses actions during evaluation rollouts.
pub trait Policy {
    fn act(
        &self,
        day_index: usize,
        state: &EnvState,
        features: &[f64],
    ) -> Result<usize, HarnessError>;
}

/// Argmax of the learned values or policy probabilities.
pub struct GreedyPolicy<'a, F>(pub &'a AgentBundle<F>);

impl<F: Scalar> Policy for GreedyPolicy<'_, F> {
    fn act(&self, _: usize, _: &EnvState, features: &[f64]) -> Result<usize, HarnessError> {
        let x: Vec<F> = features.iter().map(|&v| F::of(v)).collect();
        let mut no_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(self.0.select_action(&x, Mode::Eval, &mut no_rng)?)
    }
}

pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&self, _: usize, _: &EnvState, _: &[f64]) -> Result<usize, HarnessError> {
        Ok(Action::Idle.index())
    }
}

/// A fixed action per day and minute, e.g. the oracle's plan.
pub struct ActionScript(pub Vec<Vec<Action>>);

impl Policy for ActionScript {
    fn act(&self, day_index: usize, state: &EnvState, _: &[f64]) -> Result<usize, HarnessError> {
        self.0
            .get(day_index)
            .and_then(|d| d.get(state.minute))
            .map(|a| a.index())
            .ok_or_else(|| {
                HarnessError::Precondition(format!(
                    "no scripted action for day {day_index} minute {}",
                    state.minute
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: NaiveDate,
    pub profit: f64,
    pub cycles: f64,
    /// Profit per clock hour 0..24.
    pub hourly_profit: Vec<f64>,
}

/// Fixed-width bins; bin `i` covers `[start + i w, start + (i + 1) w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bin_width: f64) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self {
                start: 0.0,
                bin_width,
                counts: Vec::new(),
            };
        }
        let start = (lo / bin_width).floor() * bin_width;
        let bins = (((hi - start) / bin_width).floor() as usize + 1).max(1);
        let mut counts = vec![0; bins];
        for &v in values {
            let i = (((v - start) / bin_width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self {
            start,
            bin_width,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Smallest sample `x` with empirical CDF(x) >= rho.
pub fn empirical_var(values: &[f64], rho: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((rho * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[k - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_daily_profit: f64,
    pub avg_daily_cycles: f64,
    /// Euros per cycle; `None` when no cycle was used.
    pub proportional_profit: Option<f64>,
    pub hourly_histogram: Histogram,
    /// Empirical VaR at 0.1 of the hourly profit.
    pub hourly_var: Option<f64>,
    pub hours: usize,
    pub days: Vec<DayReport>,
}

impl EvalReport {
    fn from_days(days: Vec<DayReport>) -> Self {
        let n = days.len().max(1) as f64;
        let avg_daily_profit = days.iter().map(|d| d.profit).sum::<f64>() / n;
        let avg_daily_cycles = days.iter().map(|d| d.cycles).sum::<f64>() / n;
        let hourly: Vec<f64> = days
            .iter()
            .flat_map(|d| d.hourly_profit.iter().copied())
            .collect();
        Self {
            avg_daily_profit,
            avg_daily_cycles,
            proportional_profit: (avg_daily_cycles > 0.0)
                .then(|| avg_daily_profit / avg_daily_cycles),
            hourly_histogram: Histogram::from_values(&hourly, HOURLY_BIN_EUR),
            hourly_var: empirical_var(&hourly, 0.1),
            hours: hourly.len(),
            days,
        }
    }

    /// Human-readable summary; the per-day rows follow the averages.
    pub fn to_text(&self) -> String {
        let prop = self
            .proportional_profit
            .map_or_else(|| "undefined".to_string(), |p| format!("{p:.4}"));
        let var = self
            .hourly_var
            .map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
        let mut s = format!(
            "avg_daily_profit_eur = {:.6}\navg_daily_cycles = {:.6}\nproportional_profit_eur_per_cycle = {prop}\nhourly_var_0.1_eur = {var}\nhours = {}\n\ndate,profit_eur,cycles\n",
            self.avg_daily_profit,
            self.avg_daily_cycles,
            self.hours
        );
        for d in &self.days {
            s.push_str(&format!("{},{:.6},{:.6}\n", d.date, d.profit, d.cycles));
        }
        s
    }
}

/// Roll the policy over every day from the configured initial SoC.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    days: &PriceSeries,
    battery: &BatteryConfig,
    norm: &FeatureNorm,
) -> Result<EvalReport, HarnessError> {
    let mut reports = Vec::with_capacity(days.len());
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    for (i, day) in days.days().iter().enumerate() {
        let mut env = BatteryEnv::reset(day, battery, battery.initial_soc)?.with_norm(*norm);
        let mut hourly = vec![0.0; MINUTES_PER_DAY / 60];
        let mut profit = 0.0;
        while !env.is_done() {
            let hour = env.state().minute / 60;
            let features = env.observe();
            let action = policy.act(i, env.state(), &features)?;
            let fb = env.step_index(action, &mut unused)?;
            profit += fb.reward;
            hourly[hour] += fb.reward;
        }
        reports.push(DayReport {
            date: day.date(),
            profit,
            cycles: env.state().cycles,
            hourly_profit: hourly,
        });
    }
    Ok(EvalReport::from_days(reports))
}

/// Greedy rollouts of a trained agent.
pub fn evaluate<F: Scalar>(
    bundle: &AgentBundle<F>,
    days: &PriceSeries,
    battery: &BatteryConfig,
    norm: &FeatureNorm,
) -> Result<EvalReport, HarnessError> {
    if bundle.input_width() != battery.feature_width() {
        return Err(HarnessError::TopologyMismatch {
            network: bundle.input_width(),
            env: battery.feature_width(),
        });
    }
    evaluate_policy(&GreedyPolicy(bundle), days, battery, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, Algorithm};
    use crate::harness::dp_oracle;
    use crate::market::{synthesize_prices, WaveformSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(days: u32) -> PriceSeries {
        let mut spec = WaveformSpec::square_wave(0.0, 1000.0, 360);
        spec.days = days;
        synthesize_prices(&spec).unwrap()
    }

    #[test]
    fn idle_policy_earns_nothing() {
        let r = evaluate_policy(
            &IdlePolicy,
            &square(1),
            &BatteryConfig::default(),
            &FeatureNorm::default(),
        )
        .unwrap();
        assert_eq!(r.avg_daily_profit, 0.0);
        assert_eq!(r.avg_daily_cycles, 0.0);
        assert_eq!(r.proportional_profit, None);
        assert!(r
            .to_text()
            .contains("proportional_profit_eur_per_cycle = undefined"));
        assert_eq!(r.hourly_histogram.total(), 24);
    }

    #[test]
    fn oracle_plan_replays_to_oracle_value() {
        let days = square(2);
        let config = BatteryConfig::default();
        let plans: Vec<_> = days
            .days()
            .iter()
            .map(|d| dp_oracle(d, &config, 201).unwrap())
            .collect();
        let script = ActionScript(plans.iter().map(|p| p.actions.clone()).collect());
        let r = evaluate_policy(&script, &days, &config, &FeatureNorm::default()).unwrap();
        assert_eq!(r.days.len(), 2);
        for (d, p) in r.days.iter().zip(&plans) {
            assert!((d.profit - p.profit).abs() < 1e-6);
            assert!((d.hourly_profit.iter().sum::<f64>() - d.profit).abs() < 1e-9);
        }
        let mean = (r.days[0].profit + r.days[1].profit) / 2.0;
        assert!((r.avg_daily_profit - mean).abs() < 1e-9);
        let p = r.proportional_profit.unwrap();
        assert!((p * r.avg_daily_cycles - r.avg_daily_profit).abs() < 1e-9);
        assert_eq!(r.hourly_histogram.total(), 48);
    }

    #[test]
    fn empirical_var_is_lower_quantile() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(empirical_var(&v, 0.1), Some(2.0));
        assert_eq!(empirical_var(&v, 1.0), Some(20.0));
        assert_eq!(empirical_var(&[], 0.1), None);
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(&[-15.0, -5.0, 0.0, 9.99, 10.0, 25.0], 10.0);
        assert_eq!(h.start, -20.0);
        assert_eq!(h.counts, vec![1, 1, 2, 1, 1]);
    }

    #[test]
    fn topology_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = AgentConfig {
            algorithm: Algorithm::Dqn,
            hidden: vec![4],
            ..AgentConfig::default()
        };
        let b: AgentBundle<f64> = AgentBundle::new(c, 10, &mut rng).unwrap();
        let err = evaluate(
            &b,
            &square(1),
            &BatteryConfig::default(),
            &FeatureNorm::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            HarnessError::TopologyMismatch {
                network: 10,
                env: 9
            }
        ));
    }
}
