use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::agents::{AgentBundle, AgentConfig};
use crate::env::{BatteryConfig, FeatureNorm};
use crate::nn::{AdamState, DenseNet, Layer, ScalarAdam, Topology};
use crate::Scalar;

/// First line of every checkpoint file; the JSON body follows.
pub const CHECKPOINT_MAGIC: &str = "IMBRL-CHECKPOINT 1";

/// A resumable snapshot of an agent plus what is needed to evaluate it.
#[derive(Clone, Debug)]
pub struct Checkpoint<F> {
    pub bundle: AgentBundle<F>,
    pub battery: BatteryConfig,
    pub norm: FeatureNorm,
    /// Episodes completed when the snapshot was taken.
    pub episode: usize,
    pub config_hash: String,
    pub rng: Option<ChaCha8Rng>,
}

#[derive(Serialize, Deserialize)]
struct LayerState {
    /// Row-major `in x out`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetState {
    topology: Topology,
    layers: Vec<LayerState>,
}

#[derive(Serialize, Deserialize)]
struct AdamSnapshot {
    step: u64,
    lr: f64,
    m: Vec<LayerState>,
    v: Vec<LayerState>,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    config_hash: String,
    episode: usize,
    agent: AgentConfig,
    battery: BatteryConfig,
    norm: FeatureNorm,
    critic: NetState,
    critic_target: NetState,
    actor: Option<NetState>,
    critic_opt: AdamSnapshot,
    actor_opt: Option<AdamSnapshot>,
    log_alpha: f64,
    alpha_opt: ScalarAdam,
    epsilon: f64,
    env_steps: u64,
    updates: u64,
    rng: Option<ChaCha8Rng>,
}

fn layer_out<F: Scalar>(l: &Layer<F>) -> LayerState {
    LayerState {
        weights: l.weights.iter().map(|v| v.as_f64()).collect(),
        bias: l.bias.iter().map(|v| v.as_f64()).collect(),
    }
}

fn layer_in<F: Scalar>(s: &LayerState, shape: (usize, usize)) -> Result<Layer<F>, HarnessError> {
    let bad = || HarnessError::Checkpoint(format!("layer data does not fit shape {shape:?}"));
    if s.bias.len() != shape.1 {
        return Err(bad());
    }
    Ok(Layer {
        weights: Array2::from_shape_vec(shape, s.weights.iter().map(|&v| F::of(v)).collect())
            .map_err(|_| bad())?,
        bias: Array1::from(s.bias.iter().map(|&v| F::of(v)).collect::<Vec<_>>()),
    })
}

fn shapes(t: &Topology) -> Vec<(usize, usize)> {
    let mut widths = vec![t.input];
    widths.extend(&t.hidden);
    widths.push(t.head.width());
    widths.windows(2).map(|w| (w[0], w[1])).collect()
}

fn net_out<F: Scalar>(net: &DenseNet<F>) -> NetState {
    NetState {
        topology: net.topology(),
        layers: net.layers().iter().map(layer_out).collect(),
    }
}

fn layers_in<F: Scalar>(
    states: &[LayerState],
    t: &Topology,
) -> Result<Vec<Layer<F>>, HarnessError> {
    let shapes = shapes(t);
    if shapes.len() != states.len() {
        return Err(HarnessError::Checkpoint(
            "layer count does not match topology".into(),
        ));
    }
    states
        .iter()
        .zip(shapes)
        .map(|(s, shape)| layer_in(s, shape))
        .collect()
}

fn net_in<F: Scalar>(s: &NetState) -> Result<DenseNet<F>, HarnessError> {
    let layers = layers_in(&s.layers, &s.topology)?;
    DenseNet::from_layers(layers, s.topology.head)
        .map_err(|e| HarnessError::Checkpoint(e.to_string()))
}

fn adam_out<F: Scalar>(a: &AdamState<F>) -> AdamSnapshot {
    let (m, v) = a.moments();
    AdamSnapshot {
        step: a.step,
        lr: a.lr,
        m: m.iter().map(layer_out).collect(),
        v: v.iter().map(layer_out).collect(),
    }
}

fn adam_in<F: Scalar>(s: &AdamSnapshot, t: &Topology) -> Result<AdamState<F>, HarnessError> {
    Ok(AdamState::from_parts(
        layers_in(&s.m, t)?,
        layers_in(&s.v, t)?,
        s.step,
        s.lr,
    ))
}

impl<F: Scalar> Checkpoint<F> {
    pub fn to_text(&self) -> Result<String, HarnessError> {
        let b = &self.bundle;
        let payload = Payload {
            config_hash: self.config_hash.clone(),
            episode: self.episode,
            agent: b.config().clone(),
            battery: self.battery.clone(),
            norm: self.norm,
            critic: net_out(b.critic()),
            critic_target: net_out(b.critic_target()),
            actor: b.actor().map(net_out),
            critic_opt: adam_out(b.critic_optimizer()),
            actor_opt: b.actor_optimizer().map(adam_out),
            log_alpha: b.log_alpha,
            alpha_opt: b.alpha_opt,
            epsilon: b.epsilon,
            env_steps: b.env_steps,
            updates: b.updates,
            rng: self.rng.clone(),
        };
        Ok(format!(
            "{CHECKPOINT_MAGIC}\n{}\n",
            serde_json::to_string(&payload)?
        ))
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let (head, body) = text.split_once('\n').unwrap_or((text, ""));
        if head.trim_end() != CHECKPOINT_MAGIC {
            return Err(HarnessError::Checkpoint(format!(
                "missing header line {CHECKPOINT_MAGIC:?}"
            )));
        }
        let p: Payload = serde_json::from_str(body)?;
        let critic: DenseNet<F> = net_in(&p.critic)?;
        let target = net_in(&p.critic_target)?;
        let actor = p.actor.as_ref().map(net_in).transpose()?;
        let mut bundle = AgentBundle::from_parts(p.agent, critic, target, actor)?;
        bundle.critic_opt = adam_in(&p.critic_opt, &p.critic.topology)?;
        bundle.actor_opt = match (&p.actor_opt, &p.actor) {
            (Some(o), Some(a)) => Some(adam_in(o, &a.topology)?),
            (None, None) => None,
            _ => {
                return Err(HarnessError::Checkpoint(
                    "actor and its optimizer must appear together".into(),
                ))
            }
        };
        bundle.log_alpha = p.log_alpha;
        bundle.alpha_opt = p.alpha_opt;
        bundle.epsilon = p.epsilon;
        bundle.env_steps = p.env_steps;
        bundle.updates = p.updates;
        Ok(Self {
            bundle,
            battery: p.battery,
            norm: p.norm,
            episode: p.episode,
            config_hash: p.config_hash,
            rng: p.rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = self.to_text()?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text)
    }
}
