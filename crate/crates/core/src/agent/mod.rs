//! Factored deep Q-learning.
//!
//! The network has one output head per device; the joint action value is
//! the sum of the selected entry of every head, so the greedy joint action
//! is the per-head argmax and its value the sum of per-head maxima. Cost is
//! linear in the total number of device settings instead of their product.

mod mlp;
mod replay;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Observation, Transition, VvcEnv};
use crate::{Error, Result};

pub use mlp::{Adam, ForwardCache, Mlp};
pub use replay::ReplayBuffer;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pretrain_steps: usize,
    /// Updates between target-network copies.
    pub target_period: usize,
    pub epsilon_max: f64,
    pub epsilon_min: f64,
    pub epsilon_length: usize,
    /// Multiplies rewards inside TD targets only.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 64,
            learning_rate: 0.0005,
            pretrain_steps: 100,
            target_period: 30,
            epsilon_max: 1.0,
            epsilon_min: 0.02,
            epsilon_length: 500,
            reward_scale: 5.0,
            hidden: vec![120, 120],
            buffer_capacity: 50_000,
        }
    }
}

/// Linear decay from `epsilon_max` to `epsilon_min` over `epsilon_length`
/// steps, then constant.
pub fn epsilon(cfg: &DqnConfig, step: usize) -> f64 {
    if step >= cfg.epsilon_length {
        return cfg.epsilon_min;
    }
    let frac = step as f64 / cfg.epsilon_length as f64;
    cfg.epsilon_max + (cfg.epsilon_min - cfg.epsilon_max) * frac
}

/// Greedy joint action from per-device heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMax {
    pub action: Vec<usize>,
    pub value: f64,
    /// Head entries inspected.
    pub ops: usize,
}

/// Per-head argmax (lowest index wins ties) and the sum of the maxima.
pub fn factored_max(heads: &[&[f64]]) -> FactoredMax {
    let mut action = Vec::with_capacity(heads.len());
    let mut value = 0.0;
    let mut ops = 0;
    for h in heads {
        let mut best = 0;
        for (i, &q) in h.iter().enumerate() {
            ops += 1;
            if q > h[best] {
                best = i;
            }
        }
        action.push(best);
        value += h[best];
    }
    FactoredMax { action, value, ops }
}

/// Sum over devices of head i's entry at `action[i]`.
pub fn q_value(net: &Mlp, obs: &[f64], action: &[usize]) -> f64 {
    let out = net.forward(obs);
    net.split_heads(&out).iter().zip(action).map(|(h, &a)| h[a]).sum()
}

pub fn greedy_action(net: &Mlp, obs: &[f64]) -> FactoredMax {
    let out = net.forward(obs);
    factored_max(&net.split_heads(&out))
}

/// Replay item with actions as per-device indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Vec<f64>,
    pub action: Vec<usize>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// Mean squared TD error of `batch` and its gradient with respect to the
/// online parameters. Targets are `reward * scale + gamma * max_a' q_target`.
pub fn td_loss_and_grad(net: &Mlp, target: &Mlp, batch: &[&Experience], cfg: &DqnConfig) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.num_params()];
    let mut loss = 0.0;
    let n = batch.len() as f64;
    let mut dout = vec![0.0; net.heads().iter().sum()];
    for e in batch {
        let next = target.forward(&e.next_obs);
        let y = e.reward * cfg.reward_scale + cfg.gamma * factored_max(&target.split_heads(&next)).value;
        let cache = net.forward_cached(&e.obs);
        let heads = net.split_heads(cache.output());
        let q: f64 = heads.iter().zip(&e.action).map(|(h, &a)| h[a]).sum();
        let err = q - y;
        loss += err * err / n;
        dout.iter_mut().for_each(|d| *d = 0.0);
        let mut off = 0;
        for (&width, &a) in net.heads().iter().zip(&e.action) {
            dout[off + a] = 2.0 * err / n;
            off += width;
        }
        net.backward(&cache, &dout, &mut grad);
    }
    (loss, grad)
}

/// Per-step training record; rewards are unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub reward: f64,
    pub reward_default_delta: f64,
    pub max_violation: f64,
    pub epsilon: f64,
    /// Loss of the update made after this step; NaN if none ran.
    pub loss: f64,
    pub switches: f64,
    pub default_switches: f64,
    pub default_max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub updates: usize,
    pub config: DqnConfig,
    pub net: Mlp,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                source_name: path.display().to_string(),
                message: format!("checkpoint format {} unsupported", ck.format_version),
            });
        }
        Ok(ck)
    }
}

/// Online and target networks, optimizer, replay and the run's RNG.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub cfg: DqnConfig,
    pub net: Mlp,
    pub target: Mlp,
    adam: Adam,
    buffer: ReplayBuffer<Experience>,
    rng: ChaCha8Rng,
    seed: u64,
    updates: usize,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, action_sizes: &[usize], cfg: DqnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(obs_dim, &cfg.hidden, action_sizes, &mut rng);
        Self {
            adam: Adam::new(net.num_params(), cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            target: net.clone(),
            net,
            cfg,
            rng,
            seed,
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer<Experience> {
        &self.buffer
    }

    pub fn remember(&mut self, e: Experience) {
        self.buffer.push(e);
    }

    /// ε-greedy per-device indices; exploration draws each device uniformly.
    pub fn act(&mut self, obs: &[f64], eps: f64) -> Vec<usize> {
        if self.rng.random::<f64>() < eps {
            let sizes = self.net.heads().to_vec();
            sizes.iter().map(|&n| self.rng.random_range(0..n)).collect()
        } else {
            greedy_action(&self.net, obs).action
        }
    }

    /// One gradient step on a sampled batch; copies the target every
    /// `target_period` updates. Returns the pre-step loss, or `None` when
    /// the buffer is empty.
    pub fn update(&mut self) -> Result<Option<f64>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng);
        let (loss, grad) = td_loss_and_grad(&self.net, &self.target, &batch, &self.cfg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { update: self.updates });
        }
        self.adam.step(self.net.params_mut(), &grad);
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_period) {
            self.target = self.net.clone();
        }
        Ok(Some(loss))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            seed: self.seed,
            updates: self.updates,
            config: self.cfg.clone(),
            net: self.net.clone(),
        }
    }
}

fn check_layout(env: &VvcEnv, offline: &[Transition]) -> Result<()> {
    let dim = env.layout().dim();
    let k = env.feeder().num_devices();
    for tr in offline {
        if tr.obs.len() != dim || tr.next_obs.len() != dim || tr.action.0.len() != k {
            return Err(Error::LayoutMismatch(format!(
                "offline transition t={} has obs {} / action {}, environment expects {dim} / {k}",
                tr.t,
                tr.obs.len(),
                tr.action.0.len()
            )));
        }
    }
    Ok(())
}

/// Seeds replay with `offline`, runs `pretrain_steps` updates, then
/// interacts for `steps` environment steps with one update after each.
/// `on_step` sees every step's metrics as they are produced.
pub fn train(
    agent: &mut DqnAgent,
    env: &mut VvcEnv,
    offline: &[Transition],
    steps: usize,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<Vec<StepMetrics>> {
    check_layout(env, offline)?;
    if agent.net.input_dim() != env.layout().dim() || agent.net.heads() != env.action_sizes() {
        return Err(Error::LayoutMismatch("agent network does not match environment".into()));
    }
    if steps > env.config().horizon {
        return Err(Error::Argument(format!("{steps} steps exceed horizon {}", env.config().horizon)));
    }
    let feeder = env.feeder().clone();
    for tr in offline {
        agent.remember(Experience {
            obs: tr.obs.clone(),
            action: tr.action.to_indices(&feeder),
            reward: tr.reward,
            next_obs: tr.next_obs.clone(),
        });
    }
    for _ in 0..agent.cfg.pretrain_steps {
        agent.update()?;
    }

    let baseline = env.baseline().clone();
    let mut metrics = Vec::with_capacity(steps);
    let mut obs: Observation = env.reset();
    for step in 0..steps {
        let eps = epsilon(&agent.cfg, step);
        let idx = agent.act(&obs.features, eps);
        let out = env.step(&ActionVector::from_indices(&feeder, &idx))?;
        agent.remember(Experience {
            obs: std::mem::take(&mut obs.features),
            action: idx,
            reward: out.reward,
            next_obs: out.observation.features.clone(),
        });
        let loss = agent.update()?.unwrap_or(f64::NAN);
        let base = &baseline.rewards[step];
        let m = StepMetrics {
            step,
            reward: out.reward,
            reward_default_delta: out.reward - base.total,
            max_violation: out.info.reward.max_violation,
            epsilon: eps,
            loss,
            switches: out.info.reward.switch_term,
            default_switches: base.switch_term,
            default_max_violation: base.max_violation,
        };
        on_step(&m);
        metrics.push(m);
        obs = out.observation;
    }
    Ok(metrics)
}

/// Runs the greedy policy of `net` without learning.
pub fn evaluate(net: &Mlp, env: &mut VvcEnv, steps: usize) -> Result<Vec<StepMetrics>> {
    let feeder = env.feeder().clone();
    let baseline = env.baseline().clone();
    let mut obs = env.reset();
    let mut metrics = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx = greedy_action(net, &obs.features).action;
        let out = env.step(&ActionVector::from_indices(&feeder, &idx))?;
        let base = &baseline.rewards[step];
        metrics.push(StepMetrics {
            step,
            reward: out.reward,
            reward_default_delta: out.reward - base.total,
            max_violation: out.info.reward.max_violation,
            epsilon: 0.0,
            loss: f64::NAN,
            switches: out.info.reward.switch_term,
            default_switches: base.switch_term,
            default_max_violation: base.max_violation,
        });
        obs = out.observation;
    }
    Ok(metrics)
}
