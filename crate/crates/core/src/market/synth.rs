use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Day, PriceRecord, PriceSeries, MINUTES_PER_DAY, MINUTES_PER_QUARTER_HOUR};

/// Piecewise-constant daily price pattern.
///
/// Segment `i` lasts `segment_minutes[i]` and sits at
/// `levels[i % levels.len()]`. Segment lengths must tile a day and align
/// with quarter-hours. Gaussian noise with standard deviation
/// `noise_amplitude` is added to the forecast price only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformSpec {
    pub levels: Vec<f64>,
    pub segment_minutes: Vec<u32>,
    pub noise_amplitude: f64,
    pub seed: u64,
    pub days: u32,
    pub start_date: NaiveDate,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self::square_wave(0.0, 1000.0, 360)
    }
}

impl WaveformSpec {
    pub fn constant(price: f64) -> Self {
        Self {
            levels: vec![price],
            segment_minutes: vec![MINUTES_PER_DAY as u32],
            ..Self::square_wave(0.0, 0.0, 360)
        }
    }

    /// Alternates `low`, `high`, ... starting with `low`.
    pub fn square_wave(low: f64, high: f64, segment: u32) -> Self {
        let n = (MINUTES_PER_DAY as u32).div_ceil(segment.max(1)) as usize;
        Self {
            levels: vec![low, high],
            segment_minutes: vec![segment; n],
            noise_amplitude: 0.0,
            seed: 0,
            days: 1,
            start_date: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidWaveform(m));
        if self.levels.is_empty() || self.levels.iter().any(|l| !l.is_finite()) {
            return bad("levels must be non-empty and finite".into());
        }
        let total: u64 = self.segment_minutes.iter().map(|&m| m as u64).sum();
        if total != MINUTES_PER_DAY as u64 || self.segment_minutes.contains(&0) {
            return bad(format!(
                "segments cover {total} minutes, need {MINUTES_PER_DAY}"
            ));
        }
        if self
            .segment_minutes
            .iter()
            .any(|&m| !(m as usize).is_multiple_of(MINUTES_PER_QUARTER_HOUR))
        {
            return bad("segment lengths must be multiples of 15 minutes".into());
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad("noise amplitude must be finite and non-negative".into());
        }
        if self.days == 0 {
            return bad("at least one day required".into());
        }
        Ok(())
    }

    /// Noise-free price at each minute of the day.
    pub fn profile(&self) -> Vec<f64> {
        self.segment_minutes
            .iter()
            .enumerate()
            .flat_map(|(i, &len)| {
                std::iter::repeat_n(self.levels[i % self.levels.len()], len as usize)
            })
            .collect()
    }
}

pub fn synthesize_prices(spec: &WaveformSpec) -> Result<PriceSeries, DataError> {
    spec.validate()?;
    let profile = spec.profile();
    let noise = Normal::new(0.0, spec.noise_amplitude)
        .map_err(|e| DataError::InvalidWaveform(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut days = Vec::with_capacity(spec.days as usize);
    for d in 0..spec.days {
        let date = spec
            .start_date
            .checked_add_days(Days::new(d as u64))
            .ok_or_else(|| DataError::InvalidWaveform("date overflow".into()))?;
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight exists");
        let records = profile
            .iter()
            .enumerate()
            .map(|(m, &level)| {
                let jitter = if spec.noise_amplitude > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                PriceRecord {
                    timestamp: midnight + chrono::Duration::minutes(m as i64),
                    forecast_price: level + jitter,
                    settlement_price: level,
                }
            })
            .collect();
        days.push(Day::new(date, records)?);
    }
    PriceSeries::from_days(days)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_wave_without_noise() {
        let s = synthesize_prices(&WaveformSpec::square_wave(0.0, 1000.0, 360)).unwrap();
        let day = &s.days()[0];
        assert!(day
            .records()
            .iter()
            .all(|r| r.forecast_price == r.settlement_price));
        assert_eq!(day.settlement(0), 0.0);
        assert_eq!(day.settlement(359), 0.0);
        assert_eq!(day.settlement(360), 1000.0);
        assert_eq!(day.settlement(1080), 1000.0);
        let switches = (1..MINUTES_PER_DAY)
            .filter(|&m| day.settlement(m) != day.settlement(m - 1))
            .count();
        assert_eq!(switches, 3);
    }

    #[test]
    fn noise_touches_forecast_only() {
        let spec = WaveformSpec {
            noise_amplitude: 50.0,
            seed: 3,
            days: 10,
            ..WaveformSpec::square_wave(0.0, 1000.0, 360)
        };
        let s = synthesize_prices(&spec).unwrap();
        let profile = spec.profile();
        let mut dev = Vec::new();
        for day in s.days() {
            for (m, r) in day.records().iter().enumerate() {
                assert_eq!(r.settlement_price, profile[m]);
                dev.push(r.forecast_price - profile[m]);
            }
        }
        let n = dev.len() as f64;
        let mean = dev.iter().sum::<f64>() / n;
        let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        // 14400 draws: standard error of the mean is 50/120 ~ 0.42.
        assert!(mean.abs() < 2.0, "{mean}");
        assert!((sd - 50.0).abs() < 2.0, "{sd}");
        let outside = dev.iter().filter(|d| d.abs() > 150.0).count() as f64 / n;
        assert!(outside < 0.005, "{outside}");
    }

    #[test]
    fn constant_price() {
        let s = synthesize_prices(&WaveformSpec::constant(100.0)).unwrap();
        assert!(s.days()[0]
            .records()
            .iter()
            .all(|r| r.forecast_price == 100.0 && r.settlement_price == 100.0));
    }

    #[test]
    fn segments_must_tile_a_day() {
        let spec = WaveformSpec {
            segment_minutes: vec![360, 360],
            ..Default::default()
        };
        assert!(matches!(
            synthesize_prices(&spec),
            Err(DataError::InvalidWaveform(_))
        ));
        let spec = WaveformSpec {
            segment_minutes: vec![7, 1433],
            ..Default::default()
        };
        assert!(synthesize_prices(&spec).is_err());
    }
}
