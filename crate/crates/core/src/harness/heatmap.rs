use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::agents::AgentBundle;
use crate::env::{encode_features, BatteryConfig, EnvState, FeatureNorm};
use crate::Scalar;

/// Axes and the values held fixed for every cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    /// Forecast prices, €/MWh, strictly increasing.
    pub prices: Vec<f64>,
    /// States of charge, strictly increasing within `[0, 1]`.
    pub socs: Vec<f64>,
    pub minute: usize,
    pub month: u32,
    pub cycles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub minute: usize,
    pub minute_of_quarter: u32,
    pub quarter_hour: u32,
    pub month: u32,
    pub cycles: f64,
    pub algorithm: String,
    pub note: String,
}

/// Greedy action per (SoC, price) cell, stored row-major with one row per
/// SoC value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub prices: Vec<f64>,
    pub socs: Vec<f64>,
    pub actions: Vec<u8>,
    pub metadata: HeatmapMeta,
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

pub fn heatmap<F: Scalar>(
    bundle: &AgentBundle<F>,
    spec: &HeatmapSpec,
    battery: &BatteryConfig,
    norm: &FeatureNorm,
) -> Result<HeatmapGrid, HarnessError> {
    if !strictly_increasing(&spec.prices) || !strictly_increasing(&spec.socs) {
        return Err(HarnessError::Precondition(
            "heatmap axes must be non-empty and strictly increasing".into(),
        ));
    }
    if bundle.input_width() != battery.feature_width() {
        return Err(HarnessError::TopologyMismatch {
            network: bundle.input_width(),
            env: battery.feature_width(),
        });
    }
    let m = spec.minute % crate::market::MINUTES_PER_DAY;
    let base = EnvState {
        minute: m,
        minute_of_quarter: (m % 15) as u32,
        quarter_hour: (m / 15) as u32,
        month: spec.month,
        soc: 0.0,
        forecast_price: 0.0,
        cycles: spec.cycles,
    };
    let width = battery.feature_width();
    let cells = spec.socs.len() * spec.prices.len();
    let mut x = Array2::zeros((cells, width));
    for (r, &soc) in spec.socs.iter().enumerate() {
        for (c, &price) in spec.prices.iter().enumerate() {
            let state = EnvState {
                soc,
                forecast_price: price,
                ..base
            };
            let f = encode_features(&state, norm, battery);
            for (j, v) in f.into_iter().enumerate() {
                x[[r * spec.prices.len() + c, j]] = F::of(v);
            }
        }
    }
    let actions = bundle
        .greedy_actions(x.view())?
        .into_iter()
        .map(|a| a as u8)
        .collect();
    Ok(HeatmapGrid {
        prices: spec.prices.clone(),
        socs: spec.socs.clone(),
        actions,
        metadata: HeatmapMeta {
            minute: m,
            minute_of_quarter: base.minute_of_quarter,
            quarter_hour: base.quarter_hour,
            month: spec.month,
            cycles: spec.cycles,
            algorithm: bundle.algorithm().to_string(),
            note: "raw greedy policy output; the cycle-cap backup controller is not applied".into(),
        },
    })
}

impl HeatmapGrid {
    pub fn get(&self, soc_index: usize, price_index: usize) -> u8 {
        self.actions[soc_index * self.prices.len() + price_index]
    }

    /// Header row of prices; each following row starts with its SoC.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("soc\\price");
        for p in &self.prices {
            s.push_str(&format!(",{p}"));
        }
        s.push('\n');
        for (r, soc) in self.socs.iter().enumerate() {
            s.push_str(&soc.to_string());
            for c in 0..self.prices.len() {
                s.push_str(&format!(",{}", self.get(r, c)));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), HarnessError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join(format!("{stem}.csv"));
        let meta = dir.join(format!("{stem}.meta.json"));
        std::fs::write(&csv, self.to_csv()).map_err(io_err(&csv))?;
        std::fs::write(&meta, serde_json::to_string_pretty(&self.metadata)?)
            .map_err(io_err(&meta))?;
        Ok((csv, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::bundle_for_tests;
    use crate::agents::Algorithm;

    fn spec(n: usize) -> HeatmapSpec {
        HeatmapSpec {
            prices: linspace(-500.0, 1500.0, n),
            socs: linspace(0.0, 1.0, n),
            minute: 600,
            month: 3,
            cycles: 0.0,
        }
    }

    #[test]
    fn zero_weight_policy_ties_to_first_action() {
        let b = bundle_for_tests(Algorithm::Sac, 9, true);
        let g = heatmap(
            &b,
            &spec(100),
            &BatteryConfig::default(),
            &FeatureNorm::default(),
        )
        .unwrap();
        assert_eq!(g.actions.len(), 10_000);
        assert!(g.actions.iter().all(|&a| a == 0));
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 101);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 101);
    }

    #[test]
    fn cells_are_valid_actions() {
        let b = bundle_for_tests(Algorithm::Dsac, 10, false);
        let battery = BatteryConfig {
            cycle_constraint: true,
            ..BatteryConfig::default()
        };
        let mut s = spec(7);
        s.cycles = 1.5;
        let g = heatmap(&b, &s, &battery, &FeatureNorm::default()).unwrap();
        assert!(g.actions.iter().all(|&a| a < 3));
        assert_eq!(g.metadata.quarter_hour, 40);
        assert!(g.metadata.note.contains("not applied"));
    }

    #[test]
    fn rejects_bad_axes() {
        let b = bundle_for_tests(Algorithm::Dqn, 9, false);
        let mut s = spec(5);
        s.socs = vec![0.5, 0.2];
        assert!(heatmap(&b, &s, &BatteryConfig::default(), &FeatureNorm::default()).is_err());
        s.socs.clear();
        assert!(heatmap(&b, &s, &BatteryConfig::default(), &FeatureNorm::default()).is_err());
    }

    #[test]
    fn writes_matrix_and_sidecar() {
        let b = bundle_for_tests(Algorithm::Dqn, 9, false);
        let g = heatmap(
            &b,
            &spec(4),
            &BatteryConfig::default(),
            &FeatureNorm::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv, meta) = g.write(dir.path(), "policy").unwrap();
        assert!(std::fs::read_to_string(csv)
            .unwrap()
            .starts_with("soc\\price,-500"));
        let m: HeatmapMeta = serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(m, g.metadata);
    }
}
