use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{BatteryConfig, EnvState};
use crate::market::{PriceSeries, MINUTES_PER_DAY};

/// Forecast price standardization, fitted on the training split only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub price_mean: f64,
    pub price_std: f64,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self {
            price_mean: 0.0,
            price_std: 1.0,
        }
    }
}

impl FeatureNorm {
    pub fn fit(train: &PriceSeries) -> Self {
        let (mean, std) = train.forecast_moments();
        Self {
            price_mean: mean,
            // A flat training price still needs a usable scale.
            price_std: if std > 1e-9 { std } else { 1.0 },
        }
    }

    pub fn standardize(&self, price: f64) -> f64 {
        (price - self.price_mean) / self.price_std
    }
}

fn cyclic(value: f64, period: f64) -> [f64; 2] {
    let angle = TAU * value / period;
    [angle.sin(), angle.cos()]
}

/// Network input for a state:
///
/// | index | feature                                   |
/// |-------|-------------------------------------------|
/// | 0, 1  | sin/cos of minute-of-quarter (period 15)  |
/// | 2, 3  | sin/cos of quarter-hour (period 96)       |
/// | 4, 5  | sin/cos of month - 1 (period 12)          |
/// | 6     | state of charge                           |
/// | 7     | standardized forecast price               |
/// | 8     | fraction of the day elapsed               |
/// | 9     | cycles / cycle cap (constrained only)     |
pub fn encode_features(state: &EnvState, norm: &FeatureNorm, config: &BatteryConfig) -> Vec<f64> {
    let mut f = Vec::with_capacity(config.feature_width());
    f.extend(cyclic(state.minute_of_quarter as f64, 15.0));
    f.extend(cyclic(state.quarter_hour as f64, 96.0));
    f.extend(cyclic(state.month.saturating_sub(1) as f64, 12.0));
    f.push(state.soc);
    f.push(norm.standardize(state.forecast_price));
    f.push(state.minute as f64 / MINUTES_PER_DAY as f64);
    if config.cycle_constraint {
        f.push(state.cycles / config.max_daily_cycles);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn state() -> EnvState {
        EnvState {
            minute: 0,
            minute_of_quarter: 0,
            quarter_hour: 0,
            month: 1,
            soc: 0.25,
            forecast_price: 150.0,
            cycles: 0.55,
        }
    }

    #[test]
    fn widths() {
        let norm = FeatureNorm::default();
        assert_eq!(
            encode_features(&state(), &norm, &BatteryConfig::default()).len(),
            9
        );
        let c = BatteryConfig {
            cycle_constraint: true,
            ..Default::default()
        };
        let f = encode_features(&state(), &norm, &c);
        assert_eq!(f.len(), 10);
        assert_abs_diff_eq!(f[9], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn phases() {
        let norm = FeatureNorm::default();
        let f = encode_features(&state(), &norm, &BatteryConfig::default());
        assert_eq!((f[0], f[1]), (0.0, 1.0));
        let half = EnvState {
            quarter_hour: 48,
            ..state()
        };
        let f = encode_features(&half, &norm, &BatteryConfig::default());
        assert_abs_diff_eq!(f[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[3], -1.0, epsilon = 1e-12);
        assert_eq!(f[6], 0.25);
    }

    #[test]
    fn price_at_mean_is_zero() {
        let norm = FeatureNorm {
            price_mean: 150.0,
            price_std: 80.0,
        };
        let f = encode_features(&state(), &norm, &BatteryConfig::default());
        assert_eq!(f[7], 0.0);
    }
}
