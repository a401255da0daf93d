//! Scripted expert and demonstration generation for the fine-tuning
//! pathway.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{EnvBatch, EnvId, PushConfig};

/// Proportional gain of the velocity-tracking controller.
pub const EXPERT_GAIN: f64 = 4.0;

/// Proportional controller on the point-mass velocity error:
/// `a = clip(k·(v_cmd − v), −1, 1)`.
pub fn scripted_expert(env_id: EnvId, obs: &[f64]) -> Result<Vec<f64>> {
    if env_id != EnvId::PointMass {
        return Err(Error::Contract(alloc::format!(
            "no scripted expert for env `{}`",
            env_id.name()
        )));
    }
    // Observation layout: (v, v_cmd, previous action).
    let v = &obs[0..2];
    let cmd = &obs[2..4];
    Ok(v.iter()
        .zip(cmd)
        .map(|(&v, &c)| (EXPERT_GAIN * (c - v)).max(-1.0).min(1.0))
        .collect())
}

/// One recorded step: raw observation and the expert action taken.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoStep {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
}

/// A demonstration dataset plus its provenance header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub env_id: EnvId,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Mean undiscounted episode return of the recorded episodes.
    pub mean_return: f64,
    pub episodes: Vec<Vec<DemoStep>>,
}

impl DemoSet {
    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }
}

/// Roll the scripted expert for `episodes` full episodes and record
/// raw (observation, action) pairs. Deterministic in `seed`.
pub fn generate_demos(env_id: EnvId, episodes: usize, seed: u64) -> Result<DemoSet> {
    if env_id != EnvId::PointMass {
        return Err(Error::Contract(alloc::format!(
            "no scripted expert for env `{}`",
            env_id.name()
        )));
    }
    let mut env = EnvBatch::new(env_id, 1, PushConfig::default());
    let mut obs = env.reset(seed);
    let mut out = Vec::with_capacity(episodes);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut episode = Vec::with_capacity(env_id.episode_limit());
        let mut ep_return = 0.0;
        loop {
            let action = scripted_expert(env_id, obs.row(0))?;
            episode.push(DemoStep { obs: obs.row(0).to_vec(), action: action.clone() });
            let step = env.step(&Tensor::matrix(1, env_id.action_dim(), action))?;
            ep_return += step.rewards[0];
            obs = step.obs;
            if step.truncateds[0] || step.dones[0] {
                break;
            }
        }
        out.push(episode);
        returns.push(ep_return);
    }
    let mean_return = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    Ok(DemoSet {
        env_id,
        obs_dim: env_id.obs_dim(),
        action_dim: env_id.action_dim(),
        mean_return,
        episodes: out,
    })
}
