use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::eval::{evaluate, EvalReport};
use super::train::train;
use super::HarnessError;
use crate::agents::Algorithm;
use crate::market::PriceSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    /// Training wall-clock seconds, excluding periodic evaluations.
    pub train_seconds: Option<f64>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Training time of each row divided by that of the first row.
    pub fn runtime_ratios(&self) -> Vec<Option<f64>> {
        let base = self.rows.first().and_then(|r| r.train_seconds);
        self.rows
            .iter()
            .map(|r| match (r.train_seconds, base) {
                (Some(t), Some(b)) if b > 0.0 => Some(t / b),
                _ => None,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "label,avg_daily_profit,avg_daily_cycles,proportional_profit,hourly_var,train_seconds,runtime_ratio\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for (row, ratio) in self.rows.iter().zip(self.runtime_ratios()) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.label,
                row.report.avg_daily_profit,
                row.report.avg_daily_cycles,
                opt(row.report.proportional_profit),
                opt(row.report.hourly_var),
                opt(row.train_seconds),
                opt(ratio)
            ));
        }
        s
    }
}

fn at_least_two(n: usize) -> Result<(), HarnessError> {
    if n < 2 {
        return Err(HarnessError::Precondition(format!(
            "a comparison needs at least 2 entries, got {n}"
        )));
    }
    Ok(())
}

/// Train each algorithm from the same base config and evaluate on the
/// test days.
pub fn compare_algorithms(
    base: &RunConfig,
    algorithms: &[Algorithm],
) -> Result<Comparison, HarnessError> {
    at_least_two(algorithms.len())?;
    let mut rows = Vec::new();
    for &algorithm in algorithms {
        let mut config = base.clone();
        config.agent.algorithm = algorithm;
        if let Some(dir) = &base.run.out_dir {
            config.run.out_dir = Some(dir.join(algorithm.name()));
        }
        let out = train(&config)?;
        let report = evaluate(
            &out.bundle,
            out.data.test_days(),
            &config.battery,
            &out.data.norm,
        )?;
        rows.push(ComparisonRow {
            label: algorithm.to_string(),
            train_seconds: Some(out.train_time.as_secs_f64()),
            report,
        });
    }
    Ok(Comparison { rows })
}

/// Evaluate saved agents side by side on the same days.
pub fn compare_checkpoints(
    paths: &[PathBuf],
    days: &PriceSeries,
) -> Result<Comparison, HarnessError> {
    at_least_two(paths.len())?;
    let mut rows = Vec::new();
    for path in paths {
        let c: Checkpoint<f64> = Checkpoint::load(path)?;
        rows.push(ComparisonRow {
            label: path.display().to_string(),
            train_seconds: None,
            report: evaluate(&c.bundle, days, &c.battery, &c.norm)?,
        });
    }
    Ok(Comparison { rows })
}
