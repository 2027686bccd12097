use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{prepare_data, Prepared, RunConfig};
use super::eval::evaluate;
use super::log::NdjsonLog;
use super::{io_err, HarnessError};
use crate::agents::{
    train_step, AgentBundle, AgentError, Algorithm, FqiConfig, FqiTrainer, Mode, UpdateStats,
};
use crate::env::{BatteryEnv, Environment};
use crate::market::sample_episode;
use crate::replay::{ReplayBuffer, Transition};
use crate::Scalar;

/// One row of the learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub val_profit: f64,
    pub val_cycles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub updates: u64,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub last_update: Option<UpdateStats>,
}

#[derive(Serialize)]
struct StepRecord<'a> {
    kind: &'static str,
    episode: usize,
    env_step: u64,
    action: usize,
    reward: f64,
    epsilon: f64,
    alpha: Option<f64>,
    update: &'a Option<UpdateStats>,
}

#[derive(Serialize)]
struct EpisodeRecord<'a> {
    kind: &'static str,
    #[serde(flatten)]
    summary: &'a EpisodeSummary,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundle: AgentBundle<f64>,
    pub data: Prepared,
    pub curve: Vec<CurvePoint>,
    pub episodes: Vec<EpisodeSummary>,
    pub env_steps: u64,
    /// Wall-clock time spent acting and learning, without evaluations.
    pub train_time: Duration,
    pub eval_time: Duration,
    pub best: Option<CurvePoint>,
    pub out_dir: Option<PathBuf>,
}

/// Roll one episode in train mode. With `learn` set, transitions go
/// through [`train_step`] (or are only stored for fitted Q-iteration).
#[allow(clippy::too_many_arguments)]
pub fn run_episode<F: Scalar, E: Environment, R: Rng>(
    bundle: &mut AgentBundle<F>,
    env: &mut E,
    buffer: &mut ReplayBuffer<F>,
    rng: &mut R,
    episode: usize,
    learn: bool,
    log: &mut NdjsonLog,
    log_every: usize,
) -> Result<EpisodeSummary, HarnessError> {
    let to_f = |v: Vec<f64>| -> Vec<F> { v.into_iter().map(F::of).collect() };
    let mut state = to_f(env.observe());
    let mut summary = EpisodeSummary {
        episode,
        steps: 0,
        reward: 0.0,
        updates: 0,
        epsilon: bundle.epsilon(),
        alpha: bundle.algorithm().is_actor_critic().then(|| bundle.alpha()),
        last_update: None,
    };
    loop {
        let action = bundle.select_action(&state, Mode::Train, rng)?;
        let fb = env.step_index(action, rng)?;
        let next = to_f(fb.next_features);
        summary.steps += 1;
        summary.reward += fb.reward;
        let transition = Transition {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            reward: fb.reward,
            next_state: next,
            done: fb.terminal,
        };
        let mut update = None;
        if learn {
            if bundle.algorithm() == Algorithm::Fqi {
                buffer.push(transition).map_err(AgentError::from)?;
            } else {
                let d = train_step(bundle, transition, buffer, rng)?;
                if d.update.is_some() {
                    summary.updates += 1;
                    summary.last_update = d.update;
                }
                update = d.update;
            }
        }
        if log_every > 0
            && bundle
                .env_steps()
                .max(summary.steps as u64)
                .is_multiple_of(log_every as u64)
        {
            log.record(&StepRecord {
                kind: "step",
                episode,
                env_step: bundle.env_steps(),
                action,
                reward: fb.reward,
                epsilon: bundle.epsilon(),
                alpha: bundle.algorithm().is_actor_critic().then(|| bundle.alpha()),
                update: &update,
            })?;
        }
        if fb.episode_end {
            break;
        }
    }
    summary.alpha = bundle.algorithm().is_actor_critic().then(|| bundle.alpha());
    Ok(summary)
}

pub fn train(config: &RunConfig) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let data = prepare_data(config)?;
    train_on(config, data)
}

struct Artifacts {
    dir: PathBuf,
    curve: File,
}

impl Artifacts {
    fn create(dir: &Path, config: &RunConfig) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let cfg = dir.join("config.toml");
        std::fs::write(&cfg, config.to_toml()).map_err(io_err(&cfg))?;
        let path = dir.join("learning_curve.csv");
        let mut curve = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(curve, "episode,val_profit,val_cycles").map_err(io_err(&path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            curve,
        })
    }

    fn append(&mut self, p: &CurvePoint) -> Result<(), HarnessError> {
        let path = self.dir.join("learning_curve.csv");
        writeln!(
            self.curve,
            "{},{},{}",
            p.episode, p.val_profit, p.val_cycles
        )
        .map_err(io_err(&path))?;
        self.curve.flush().map_err(io_err(&path))
    }
}

/// Training on already prepared data; see [`train`].
pub fn train_on(config: &RunConfig, data: Prepared) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let battery = &config.battery;
    let width = battery.feature_width();
    let mut rng = ChaCha8Rng::seed_from_u64(config.run.seed);
    let mut bundle: AgentBundle<f64> = AgentBundle::new(config.agent.clone(), width, &mut rng)?;
    let mut buffer =
        ReplayBuffer::new(config.agent.buffer_capacity, width).map_err(AgentError::from)?;
    let mut fqi = match config.agent.algorithm {
        Algorithm::Fqi => Some(FqiTrainer::new(
            bundle.critic().clone(),
            FqiConfig::from(&config.agent),
        )?),
        _ => None,
    };
    let hash = config.hash();
    let mut artifacts = config
        .run
        .out_dir
        .as_deref()
        .map(|d| Artifacts::create(d, config))
        .transpose()?;
    let mut log = match &artifacts {
        Some(a) => NdjsonLog::create(&a.dir.join("train.ndjson"))?,
        None => NdjsonLog::disabled(),
    };
    let snapshot = |bundle: &AgentBundle<f64>, episode: usize, rng: &ChaCha8Rng| Checkpoint {
        bundle: bundle.clone(),
        battery: battery.clone(),
        norm: data.norm,
        episode,
        config_hash: hash.clone(),
        rng: Some(rng.clone()),
    };

    let episodes = config.run.episodes;
    let mut curve = Vec::new();
    let mut summaries = Vec::with_capacity(episodes);
    let mut best: Option<CurvePoint> = None;
    let mut train_time = Duration::ZERO;
    let mut eval_time = Duration::ZERO;
    for e in 0..episodes {
        let start = Instant::now();
        bundle.schedule_epsilon(e, episodes);
        let day = sample_episode(&data.train, &mut rng)?;
        let mut env = BatteryEnv::reset(day, battery, battery.initial_soc)?.with_norm(data.norm);
        let before = bundle.clone();
        let mut result = run_episode(
            &mut bundle,
            &mut env,
            &mut buffer,
            &mut rng,
            e,
            true,
            &mut log,
            config.run.log_every,
        );
        if let (Ok(_), Some(trainer)) = (&result, fqi.as_mut()) {
            match trainer.fit(&buffer.to_batch(), config.agent.fqi_iterations) {
                Ok(_) => {
                    bundle.critic = trainer.net().clone();
                    bundle.critic_target = trainer.net().clone();
                }
                Err(err) => result = Err(err.into()),
            }
        }
        let summary = match result {
            Ok(s) => s,
            Err(HarnessError::Agent(source @ AgentError::NonFiniteLoss(_))) => {
                let checkpoint = match &artifacts {
                    Some(a) => {
                        let path = a.dir.join("last_good.ckpt");
                        snapshot(&before, e, &rng).save(&path)?;
                        Some(path)
                    }
                    None => None,
                };
                log.flush()?;
                return Err(HarnessError::Diverged {
                    episode: e,
                    source,
                    checkpoint,
                });
            }
            Err(other) => return Err(other),
        };
        log.record(&EpisodeRecord {
            kind: "episode",
            summary: &summary,
        })?;
        summaries.push(summary);
        train_time += start.elapsed();

        if (e + 1) % config.run.eval_every == 0 || e + 1 == episodes {
            let start = Instant::now();
            let report = evaluate(&bundle, data.evaluation_days(), battery, &data.norm)?;
            let point = CurvePoint {
                episode: e + 1,
                val_profit: report.avg_daily_profit,
                val_cycles: report.avg_daily_cycles,
            };
            curve.push(point);
            if let Some(a) = artifacts.as_mut() {
                a.append(&point)?;
            }
            if best.is_none_or(|b| point.val_profit > b.val_profit) {
                best = Some(point);
                if let Some(a) = &artifacts {
                    snapshot(&bundle, e + 1, &rng).save(&a.dir.join("best.ckpt"))?;
                }
            }
            eval_time += start.elapsed();
        }
    }
    if let Some(a) = &artifacts {
        snapshot(&bundle, episodes, &rng).save(&a.dir.join("final.ckpt"))?;
    }
    log.flush()?;
    Ok(TrainOutcome {
        env_steps: bundle.env_steps(),
        bundle,
        data,
        curve,
        episodes: summaries,
        train_time,
        eval_time,
        best,
        out_dir: artifacts.map(|a| a.dir),
    })
}
