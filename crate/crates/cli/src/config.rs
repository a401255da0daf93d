//! Run configuration: TOML files with nested sections, strict unknown-key
//! rejection, and CLI override precedence.

use fpopp_core::cfm::ClampConfig;
use fpopp_core::env::EnvId;
use fpopp_core::objectives::{ObjectiveConfig, RatioGranularity, TrustRegion};
use fpopp_core::policy::OutputParam;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Per-sample ratios with the asymmetric trust region.
    Fpopp,
    /// Per-action ratios with PPO clipping (the original formulation).
    Fpo,
    /// Diagonal-Gaussian PPO baseline.
    GaussPpo,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::Fpopp => "fpopp",
            Algo::Fpo => "fpo",
            Algo::GaussPpo => "gauss-ppo",
        }
    }

    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "fpopp" => Some(Algo::Fpopp),
            "fpo" => Some(Algo::Fpo),
            "gauss-ppo" => Some(Algo::GaussPpo),
            _ => None,
        }
    }

    pub fn is_flow(&self) -> bool {
        !matches!(self, Algo::GaussPpo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSection {
    /// "per-sample" or "per-action"; empty = algo default.
    pub granularity: Option<GranularityOpt>,
    /// "ppo", "spo", or "aspo"; empty = algo default.
    pub trust_region: Option<TrustRegionOpt>,
    pub clip_eps: f64,
    pub value_loss_coef: f64,
    pub advantage_normalization: bool,
    pub loss_clamp_max: f64,
    pub diff_clamp_max: f64,
    pub straight_through_diff_clamp: bool,
    /// Recognized but unsupported: the Huber-kernel CFM variant is a
    /// config stub only and cannot be enabled.
    pub huber_cfm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GranularityOpt {
    PerAction,
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustRegionOpt {
    Ppo,
    Spo,
    Aspo,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection {
            granularity: None,
            trust_region: None,
            clip_eps: 0.05,
            value_loss_coef: 0.5,
            advantage_normalization: true,
            loss_clamp_max: 100.0,
            diff_clamp_max: 5.0,
            straight_through_diff_clamp: true,
            huber_cfm: false,
        }
    }
}

/// Full training configuration. Field names are the config-file key
/// names; unknown keys are hard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub num_envs: usize,
    pub rollout_steps: usize,
    pub updates: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub n_mc: usize,
    pub flow_steps_train: usize,
    pub flow_steps_eval: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub hidden_actor: usize,
    pub hidden_critic: usize,
    /// "u" predicts the velocity directly, "x0" the clean action.
    pub network_output: String,
    pub entropy_coef: f64,
    pub kl_adaptive_lr: bool,
    pub target_kl: f64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub obs_clip: f64,
    pub update_normalizer: bool,
    pub push_perturbations: bool,
    pub grad_cosine_diagnostic: bool,
    pub objective: ObjectiveSection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::Fpopp,
            env: "pointmass".to_string(),
            seed: 0,
            num_envs: 256,
            rollout_steps: 24,
            updates: 300,
            epochs: 16,
            minibatches: 4,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            max_grad_norm: 1.0,
            n_mc: 16,
            flow_steps_train: 64,
            flow_steps_eval: 5,
            gamma: 0.99,
            gae_lambda: 0.95,
            hidden_actor: 64,
            hidden_critic: 128,
            network_output: "u".to_string(),
            entropy_coef: 0.0,
            kl_adaptive_lr: false,
            target_kl: 0.01,
            eval_interval: 10,
            eval_episodes: 16,
            obs_clip: 10.0,
            update_normalizer: true,
            push_perturbations: false,
            grad_cosine_diagnostic: false,
            objective: ObjectiveSection::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text)
            .map_err(|e| RunError::usage(format!("config error: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(RunError::io(path))?;
        Self::from_toml_str(&text)
    }

    pub fn env_id(&self) -> Result<EnvId> {
        EnvId::parse(&self.env)
            .ok_or_else(|| RunError::usage(format!("unknown env `{}`", self.env)))
    }

    pub fn output_param(&self) -> Result<OutputParam> {
        match self.network_output.as_str() {
            "u" => Ok(OutputParam::Velocity),
            "x0" => Ok(OutputParam::CleanAction),
            other => Err(RunError::usage(format!(
                "unknown network_output `{other}` (expected \"u\" or \"x0\")"
            ))),
        }
    }

    /// Resolve the effective objective, applying algo defaults where
    /// the config leaves granularity/trust-region open. Returns any
    /// override warnings (explicit settings that conflict with the
    /// algo's implied objective).
    pub fn objective_config(&self) -> (ObjectiveConfig, Vec<String>) {
        let (default_gran, default_tr) = match self.algo {
            Algo::Fpopp => (RatioGranularity::PerSample, TrustRegion::Aspo),
            Algo::Fpo => (RatioGranularity::PerAction, TrustRegion::Ppo),
            Algo::GaussPpo => (RatioGranularity::PerAction, TrustRegion::Ppo),
        };
        let mut warnings = Vec::new();
        let granularity = match self.objective.granularity {
            None => default_gran,
            Some(g) => {
                let g = match g {
                    GranularityOpt::PerAction => RatioGranularity::PerAction,
                    GranularityOpt::PerSample => RatioGranularity::PerSample,
                };
                if g != default_gran {
                    warnings.push(format!(
                        "objective.granularity overrides the `{}` default",
                        self.algo.name()
                    ));
                }
                g
            }
        };
        let trust_region = match self.objective.trust_region {
            None => default_tr,
            Some(t) => {
                let t = match t {
                    TrustRegionOpt::Ppo => TrustRegion::Ppo,
                    TrustRegionOpt::Spo => TrustRegion::Spo,
                    TrustRegionOpt::Aspo => TrustRegion::Aspo,
                };
                if t != default_tr {
                    warnings.push(format!(
                        "objective.trust_region overrides the `{}` default",
                        self.algo.name()
                    ));
                }
                t
            }
        };
        let cfg = ObjectiveConfig {
            granularity,
            trust_region,
            clip_eps: self.objective.clip_eps,
            value_loss_coef: self.objective.value_loss_coef,
            normalize_advantages: self.objective.advantage_normalization,
            clamp: ClampConfig {
                loss_max: self.objective.loss_clamp_max,
                diff_max: self.objective.diff_clamp_max,
                straight_through: self.objective.straight_through_diff_clamp,
            },
        };
        (cfg, warnings)
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env_id()?;
        self.output_param()?;
        let _ = env;
        if self.num_envs == 0 || self.rollout_steps == 0 {
            return Err(RunError::usage("num_envs and rollout_steps must be positive"));
        }
        if self.minibatches == 0 || (self.num_envs * self.rollout_steps) % self.minibatches != 0 {
            return Err(RunError::usage(format!(
                "num_envs * rollout_steps ({}) must be divisible by minibatches ({})",
                self.num_envs * self.rollout_steps,
                self.minibatches
            )));
        }
        if self.algo.is_flow() && self.n_mc == 0 {
            return Err(RunError::usage("n_mc must be at least 1 for flow policies"));
        }
        if self.flow_steps_train == 0 || self.flow_steps_eval == 0 {
            return Err(RunError::usage("flow step counts must be at least 1"));
        }
        if self.objective.clip_eps <= 0.0 {
            return Err(RunError::usage("objective.clip_eps must be positive"));
        }
        if self.objective.huber_cfm {
            return Err(RunError::usage(
                "objective.huber_cfm is a recognized option but not supported in this build",
            ));
        }
        Ok(())
    }

    /// Compact one-line JSON echo for log headers and checkpoints.
    pub fn echo_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
