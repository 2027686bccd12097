use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, HarnessError};
use crate::agents::AgentConfig;
use crate::env::{BatteryConfig, FeatureNorm};
use crate::market::{
    load_prices, split, synthesize_prices, PriceFileFormat, PriceSeries, SplitSpec, WaveformSpec,
};

/// Everything needed to reproduce a run. Serialized as TOML with the
/// sections `[data]`, `[battery]`, `[agent]` and `[run]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub battery: BatteryConfig,
    pub agent: AgentConfig,
    pub run: RunSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Price files. When empty the synthetic pattern is used instead.
    pub paths: Vec<PathBuf>,
    pub format: PriceFileFormat,
    pub split: SplitSpec,
    pub synthetic: WaveformSpec,
    /// Split synthetic days by day of month like real data. Otherwise
    /// every synthetic day serves for training, validation and test.
    pub split_synthetic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub episodes: usize,
    /// Validation cadence in episodes.
    pub eval_every: usize,
    pub seed: u64,
    /// Artifacts are written here; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub desk_scale: bool,
    /// Write a step record every this many environment steps; 0 disables.
    pub log_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            episodes: 50_000,
            eval_every: 250,
            seed: 0,
            out_dir: None,
            desk_scale: false,
            log_every: 60,
        }
    }
}

impl RunConfig {
    /// Small-batch, short-run settings that fit a laptop.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.apply_desk_scale();
        c
    }

    pub fn apply_desk_scale(&mut self) {
        self.run.desk_scale = true;
        self.agent.batch_size = 256;
        self.agent.buffer_capacity = 100_000;
        self.run.episodes = 2_000;
        self.run.eval_every = 25;
        self.data.paths.clear();
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_with(text, false)
    }

    /// Parse, turning on the desk-scale preset when `desk_scale` is set even
    /// if the file leaves it off.
    pub fn from_toml_with(text: &str, desk_scale: bool) -> Result<Self, HarnessError> {
        let mut c: Self = toml::from_str(text)?;
        if c.run.desk_scale || desk_scale {
            let run = c.run.clone();
            let agent = c.agent.clone();
            c.apply_desk_scale();
            // explicit values in the file win over the preset
            let explicit: toml::Table = toml::from_str(text)?;
            let has = |section: &str, key: &str| {
                explicit
                    .get(section)
                    .and_then(|s| s.as_table())
                    .is_some_and(|t| t.contains_key(key))
            };
            if has("agent", "batch_size") {
                c.agent.batch_size = agent.batch_size;
            }
            if has("agent", "buffer_capacity") {
                c.agent.buffer_capacity = agent.buffer_capacity;
            }
            if has("run", "episodes") {
                c.run.episodes = run.episodes;
            }
            if has("run", "eval_every") {
                c.run.eval_every = run.eval_every;
            }
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    /// Config from an optional file, or the defaults.
    pub fn resolve(path: Option<&Path>, desk_scale: bool) -> Result<Self, HarnessError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_err(p))?;
                Self::from_toml_with(&text, desk_scale)
            }
            None if desk_scale => Ok(Self::desk_scale()),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.battery.validate()?;
        self.agent.validate()?;
        self.data.split.validate()?;
        if self.run.episodes == 0 {
            return Err(HarnessError::Config(
                "episode count must be at least 1".into(),
            ));
        }
        if self.run.eval_every == 0 {
            return Err(HarnessError::Config(
                "evaluation cadence must be at least 1".into(),
            ));
        }
        if let Some(missing) = self.data.paths.iter().find(|p| !p.exists()) {
            return Err(HarnessError::Config(format!(
                "price file {} does not exist",
                missing.display()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form, minus the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out_dir = None;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splits and the feature normalization fitted on the training days.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: PriceSeries,
    pub validation: PriceSeries,
    pub test: PriceSeries,
    pub norm: FeatureNorm,
    /// Days dropped by the loader for being incomplete.
    pub discarded: Vec<chrono::NaiveDate>,
}

impl Prepared {
    /// Validation days, or the training days when there are none.
    pub fn evaluation_days(&self) -> &PriceSeries {
        if self.validation.is_empty() {
            &self.train
        } else {
            &self.validation
        }
    }

    /// Test days, or the training days when there are none.
    pub fn test_days(&self) -> &PriceSeries {
        if self.test.is_empty() {
            &self.train
        } else {
            &self.test
        }
    }
}

pub fn prepare_data(config: &RunConfig) -> Result<Prepared, HarnessError> {
    let data = &config.data;
    let mut discarded = Vec::new();
    let (series, split_it) = if data.paths.is_empty() {
        (synthesize_prices(&data.synthetic)?, data.split_synthetic)
    } else {
        let mut parts = Vec::new();
        for p in &data.paths {
            let report = load_prices(p, &data.format)?;
            discarded.extend(report.discarded);
            parts.push(report.series);
        }
        (PriceSeries::concat(&parts)?, true)
    };
    let (train, validation, test) = if split_it {
        split(&series, &data.split)?
    } else {
        (series.clone(), series.clone(), series)
    };
    if train.is_empty() {
        return Err(HarnessError::Config("the training split is empty".into()));
    }
    Ok(Prepared {
        norm: FeatureNorm::fit(&train),
        train,
        validation,
        test,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Algorithm;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml();
        assert!(text.contains("[agent]") && text.contains("[battery]") && text.contains("[run]"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.agent.gamma, 0.9995);
        assert_eq!(c.run.episodes, 50_000);
    }

    #[test]
    fn desk_preset_and_overrides() {
        let c = RunConfig::from_toml("[run]\ndesk_scale = true\n").unwrap();
        assert_eq!(
            (c.agent.batch_size, c.agent.buffer_capacity),
            (256, 100_000)
        );
        assert_eq!((c.run.episodes, c.run.eval_every), (2000, 25));
        let c = RunConfig::from_toml(
            "[run]\ndesk_scale = true\nepisodes = 7\n[agent]\nalgorithm = \"dqn\"\n",
        )
        .unwrap();
        assert_eq!(c.run.episodes, 7);
        assert_eq!(c.agent.algorithm, Algorithm::Dqn);
        let c = RunConfig::from_toml_with("[run]\nepisodes = 7\n", true).unwrap();
        assert!(c.run.desk_scale);
        assert_eq!((c.run.episodes, c.agent.batch_size), (7, 256));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[agent]\ngama = 0.9\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        c.run.episodes = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.data.paths.push("/definitely/not/here.csv".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.run.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn synthetic_days_fill_every_role() {
        let mut c = RunConfig::default();
        c.data.synthetic.days = 3;
        let p = prepare_data(&c).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (3, 3, 3));
        assert!((p.norm.price_mean - 500.0).abs() < 1e-9);
        c.data.split_synthetic = true;
        c.data.split = SplitSpec::new(1, 2).unwrap();
        let p = prepare_data(&c).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (1, 1, 1));
    }
}
