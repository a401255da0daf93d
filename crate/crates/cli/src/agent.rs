//! The trainable bundle: actor, critic, observation normalizer, and
//! optimizer state, with a fixed parameter ordering shared by the
//! optimizer and the checkpoint format.

use fpopp_core::env::EnvId;
use fpopp_core::normalizer::ObsNormalizer;
use fpopp_core::optim::OptimizerState;
use fpopp_core::policy::{Critic, FlowActor, GaussianActor};
use fpopp_core::rngstream::{derive, Role};
use fpopp_core::tensor::Tensor;

use crate::config::{Algo, TrainConfig};
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum ActorNet {
    Flow(FlowActor),
    Gaussian(GaussianActor),
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub algo: Algo,
    pub env_id: EnvId,
    pub actor: ActorNet,
    pub critic: Critic,
    pub normalizer: ObsNormalizer,
    pub optimizer: OptimizerState,
    pub hidden_actor: usize,
    pub hidden_critic: usize,
}

impl Agent {
    pub fn new(cfg: &TrainConfig) -> Result<Agent> {
        let env_id = cfg.env_id()?;
        let obs_dim = env_id.obs_dim();
        let action_dim = env_id.action_dim();
        let mut actor_rng = derive(cfg.seed, Role::ParamInit, 0, 0);
        let mut critic_rng = derive(cfg.seed, Role::ParamInit, 0, 1);
        let actor = match cfg.algo {
            Algo::Fpopp | Algo::Fpo => ActorNet::Flow(FlowActor::new(
                obs_dim,
                action_dim,
                cfg.hidden_actor,
                cfg.output_param()?,
                &mut actor_rng,
            )),
            Algo::GaussPpo => ActorNet::Gaussian(GaussianActor::new(
                obs_dim,
                action_dim,
                cfg.hidden_actor,
                &mut actor_rng,
            )),
        };
        let critic = Critic::new(obs_dim, cfg.hidden_critic, &mut critic_rng);
        let normalizer = ObsNormalizer::new(obs_dim, cfg.obs_clip);
        let mut agent = Agent {
            algo: cfg.algo,
            env_id,
            actor,
            critic,
            normalizer,
            // Placeholder; replaced right below once params exist.
            optimizer: OptimizerState::new(&[], cfg.learning_rate),
            hidden_actor: cfg.hidden_actor,
            hidden_critic: cfg.hidden_critic,
        };
        agent.optimizer = OptimizerState::new(&agent.params(), cfg.learning_rate)
            .with_weight_decay(cfg.weight_decay);
        Ok(agent)
    }

    /// Build an agent around a pretrained flow actor and normalizer
    /// (fine-tuning entry point); the critic starts fresh.
    pub fn from_pretrained(
        cfg: &TrainConfig,
        actor: FlowActor,
        normalizer: ObsNormalizer,
    ) -> Result<Agent> {
        let env_id = cfg.env_id()?;
        let mut critic_rng = derive(cfg.seed, Role::ParamInit, 0, 1);
        let critic = Critic::new(env_id.obs_dim(), cfg.hidden_critic, &mut critic_rng);
        let hidden_actor = actor.mlp.layers[0].weight.shape()[1];
        let mut agent = Agent {
            algo: cfg.algo,
            env_id,
            actor: ActorNet::Flow(actor),
            critic,
            normalizer,
            optimizer: OptimizerState::new(&[], cfg.learning_rate),
            hidden_actor,
            hidden_critic: cfg.hidden_critic,
        };
        agent.optimizer = OptimizerState::new(&agent.params(), cfg.learning_rate)
            .with_weight_decay(cfg.weight_decay);
        Ok(agent)
    }

    pub fn obs_dim(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn action_dim(&self) -> usize {
        match &self.actor {
            ActorNet::Flow(f) => f.action_dim,
            ActorNet::Gaussian(g) => g.action_dim,
        }
    }

    /// Parameters in the canonical order: actor first, then critic.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = match &self.actor {
            ActorNet::Flow(f) => f.mlp.params(),
            ActorNet::Gaussian(g) => g.params(),
        };
        p.extend(self.critic.mlp.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = match &mut self.actor {
            ActorNet::Flow(f) => f.mlp.params_mut(),
            ActorNet::Gaussian(g) => g.params_mut(),
        };
        p.extend(self.critic.mlp.params_mut());
        p
    }

    /// Stable names matching `params()` order, used as checkpoint field
    /// names.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let actor_layers = match &self.actor {
            ActorNet::Flow(f) => f.mlp.layers.len(),
            ActorNet::Gaussian(g) => g.mean.layers.len(),
        };
        for i in 0..actor_layers {
            names.push(format!("actor.layer{i}.weight"));
            names.push(format!("actor.layer{i}.bias"));
        }
        if matches!(self.actor, ActorNet::Gaussian(_)) {
            names.push("actor.log_std".to_string());
        }
        for i in 0..self.critic.mlp.layers.len() {
            names.push(format!("critic.layer{i}.weight"));
            names.push(format!("critic.layer{i}.bias"));
        }
        names
    }

    /// One optimizer step over all parameters, in canonical order.
    pub fn optimizer_step(&mut self, grads: &[Tensor]) -> fpopp_core::Result<()> {
        let Agent { actor, critic, optimizer, .. } = self;
        let mut params = match actor {
            ActorNet::Flow(f) => f.mlp.params_mut(),
            ActorNet::Gaussian(g) => g.params_mut(),
        };
        params.extend(critic.mlp.params_mut());
        optimizer.step(&mut params, grads)
    }

    /// Deep copy of parameters and optimizer state, for rollback.
    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            params: self.params().into_iter().cloned().collect(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn restore(&mut self, snap: &AgentSnapshot) {
        let mut params = self.params_mut();
        assert_eq!(params.len(), snap.params.len(), "snapshot shape drift");
        for (p, s) in params.iter_mut().zip(&snap.params) {
            **p = s.clone();
        }
        self.optimizer = snap.optimizer.clone();
    }
}

#[derive(Debug, Clone)]
pub struct AgentSnapshot {
    pub params: Vec<Tensor>,
    pub optimizer: OptimizerState,
}
