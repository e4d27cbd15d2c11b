//! Proximal policy optimisation over the discrete waypoint actions.
//!
//! Actor and critic are separate [`Mlp`]s with the [`HIDDEN`] topology. The
//! actor emits 20 logits, the critic one value. Gradients are exact
//! reverse-mode derivatives of the clipped-surrogate loss.

pub mod checkpoint;
pub mod mlp;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, PolicyCheckpoint};
pub use mlp::{Adam, Mlp, MlpSpec, HIDDEN};

use crate::exec::Execution;
use crate::mdp::{
    sample_initial_state, Action, Policy, RewardConfig, SamplerBounds, StateVector, TrainingEnv, N_ACTIONS,
};

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss in update {update}, epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss {
        update: usize,
        epoch: usize,
        minibatch: usize,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    /// Minibatch size.
    pub batch_size: usize,
    /// Parallel environments.
    pub n_envs: usize,
    /// Steps per environment per update.
    pub rollout_horizon: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub reward: RewardConfig,
    pub sampler: SamplerBounds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9999,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            batch_size: 128,
            n_envs: 8,
            rollout_horizon: 256,
            epochs: 10,
            learning_rate: 3e-4,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            total_steps: 300_000,
            seed: 0,
            hidden: HIDDEN.to_vec(),
            reward: RewardConfig::default(),
            sampler: SamplerBounds::default(),
        }
    }
}

impl TrainConfig {
    /// Parse a TOML config; omitted keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self, PpoError> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| PpoError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must be in (0, 1)");
        }
        if self.batch_size == 0 || self.n_envs == 0 || self.rollout_horizon == 0 {
            return bad("batch_size, n_envs and rollout_horizon must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        for (name, v) in [
            ("ent_coef", self.ent_coef),
            ("vf_coef", self.vf_coef),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PpoError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        self.reward.validate().map_err(|e| PpoError::Config(e.to_string()))?;
        self.sampler.validate().map_err(|e| PpoError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        StateVector::width(self.sampler.n_slots)
    }

    /// Transitions per update across all environments.
    pub fn rollout_len(&self) -> usize {
        self.n_envs * self.rollout_horizon
    }
}

/// Actor and critic networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActorCritic {
    /// Seeded orthogonal initialisation: hidden gain √2, actor head 0.01,
    /// critic head 1.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = crate::seed::rng(seed, u64::MAX);
        let actor = Mlp::orthogonal(
            MlpSpec::new(input_dim, hidden.to_vec(), N_ACTIONS),
            2f64.sqrt(),
            0.01,
            &mut rng,
        );
        let critic = Mlp::orthogonal(MlpSpec::new(input_dim, hidden.to_vec(), 1), 2f64.sqrt(), 1.0, &mut rng);
        ActorCritic { actor, critic }
    }

    pub fn input_dim(&self) -> usize {
        self.actor.spec().input_dim
    }

    pub fn n_params(&self) -> usize {
        self.actor.params().len() + self.critic.params().len()
    }

    /// Action probabilities and value for raw network input.
    pub fn forward_features(&self, x: &[f64]) -> Result<(Vec<f64>, f64), PpoError> {
        let logits = self.actor.forward(x)?;
        let value = self.critic.forward(x)?[0];
        Ok((softmax(&logits), value))
    }

    pub fn forward(&self, state: &StateVector) -> Result<(Vec<f64>, f64), PpoError> {
        self.forward_features(&state.features())
    }

    /// Most probable action; ties go to the lower index.
    pub fn greedy_action(&self, state: &StateVector) -> Result<Action, PpoError> {
        let logits = self.actor.forward(&state.features())?;
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        Ok(Action::from_index(best).expect("actor head has N_ACTIONS outputs"))
    }

    /// Sample an action; returns it with its log-probability and the value.
    fn act<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> (usize, f64, f64) {
        let logits = self.actor.forward(x).expect("input width checked at config time");
        let value = self.critic.forward(x).expect("input width checked at config time")[0];
        let logp = log_softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut a = N_ACTIONS - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                a = i;
                break;
            }
        }
        (a, logp[a], value)
    }
}

impl Policy for ActorCritic {
    /// Panics if the state width does not match the network.
    fn greedy(&self, state: &StateVector) -> Action {
        self.greedy_action(state).expect("state width matches the policy input")
    }
}

/// One rollout. Index `t` holds s_t, a_t, log π(a_t|s_t), V(s_t), r_t and
/// whether the episode ended with this transition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// V of the state after the last transition; ignored if that ended an
    /// episode.
    pub last_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<(), PpoError> {
        let n = self.len();
        for len in [
            self.states.len(),
            self.log_probs.len(),
            self.values.len(),
            self.rewards.len(),
            self.dones.len(),
        ] {
            if len != n {
                return Err(PpoError::ShapeMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }

    /// Append another buffer whose advantages are already computed.
    fn extend(&mut self, other: RolloutBuffer) {
        self.states.extend(other.states);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.values.extend(other.values);
        self.rewards.extend(other.rewards);
        self.dones.extend(other.dones);
        self.advantages.extend(other.advantages);
        self.returns.extend(other.returns);
    }
}

/// Generalised advantage estimation.
///
/// δ_t = r_t + γ·V(s_{t+1})·(1 − done_t) − V(s_t),
/// A_t = δ_t + γλ·(1 − done_t)·A_{t+1}, returns = A + V.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buffer.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if buffer.dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n {
            buffer.values[t + 1]
        } else {
            buffer.last_value
        };
        let delta = buffer.rewards[t] + gamma * next_v * live - buffer.values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(&buffer.values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shift and scale to zero mean and unit (population) standard deviation.
/// A constant input is only centred.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    for a in adv.iter_mut() {
        *a -= mean;
    }
    let std = (adv.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        for a in adv.iter_mut() {
            *a /= std;
        }
    }
}

/// Coefficients of the PPO loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_epsilon: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
}

impl From<&TrainConfig> for LossCoefficients {
    fn from(c: &TrainConfig) -> Self {
        LossCoefficients {
            clip_epsilon: c.clip_epsilon,
            ent_coef: c.ent_coef,
            vf_coef: c.vf_coef,
        }
    }
}

/// Loss terms over a minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// Negative clipped surrogate.
    pub policy: f64,
    /// Mean squared error to the returns.
    pub value: f64,
    pub entropy: f64,
    /// Fraction of samples with |ρ − 1| > ε.
    pub clip_fraction: f64,
}

impl LossParts {
    pub fn total(&self, c: &LossCoefficients) -> f64 {
        self.policy + c.vf_coef * self.value - c.ent_coef * self.entropy
    }
}

/// Loss and, if `grad` is given, its gradient (actor parameters then critic
/// parameters) on the samples `idx` of `buffer`.
///
/// L = −mean(min(ρA, clip(ρ, 1−ε, 1+ε)A)) + c_v·mean((V − R)²) − c_e·mean(H).
pub fn minibatch_loss(
    ac: &ActorCritic,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    idx: &[usize],
    coef: &LossCoefficients,
    mut grad: Option<&mut [f64]>,
) -> Result<LossParts, PpoError> {
    let b = idx.len() as f64;
    let na = ac.actor.params().len();
    let mut parts = LossParts::default();
    for &i in idx {
        let x = &buffer.states[i];
        let a = buffer.actions[i];
        let adv = advantages[i];
        let at = ac.actor.trace(x)?;
        let logp = log_softmax(&at.output);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let ratio = (logp[a] - buffer.log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - coef.clip_epsilon, 1.0 + coef.clip_epsilon);
        let unclipped_active = ratio * adv <= clipped * adv;
        parts.policy -= (ratio * adv).min(clipped * adv) / b;
        if (ratio - 1.0).abs() > coef.clip_epsilon {
            parts.clip_fraction += 1.0 / b;
        }
        let h: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        parts.entropy += h / b;

        let ct = ac.critic.trace(x)?;
        let v = ct.output[0];
        let ret = buffer.returns[i];
        parts.value += (v - ret) * (v - ret) / b;

        if let Some(g) = grad.as_deref_mut() {
            let ds_dratio = if unclipped_active { adv } else { 0.0 };
            let d_logits: Vec<f64> = (0..probs.len())
                .map(|j| {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    let d_policy = -ds_dratio * ratio * (onehot - probs[j]);
                    let d_entropy = coef.ent_coef * probs[j] * (logp[j] + h);
                    (d_policy + d_entropy) / b
                })
                .collect();
            let (ga, gc) = g.split_at_mut(na);
            ac.actor.backward(&at, &d_logits, ga);
            ac.critic.backward(&ct, &[coef.vf_coef * 2.0 * (v - ret) / b], gc);
        }
    }
    Ok(parts)
}

/// Per-update optimiser statistics, averaged over minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Samples per gradient work item. Fixed so parallel and sequential runs
/// sum in the same order.
const GRAD_CHUNK: usize = 16;

/// Clipped-surrogate epochs over a buffer with computed returns.
///
/// Advantages are normalised over the whole buffer first. Minibatch order
/// comes from `rng`. Gradients are clipped to `max_grad_norm` in global norm.
pub fn ppo_update(
    ac: &mut ActorCritic,
    opt: &mut Adam,
    buffer: &RolloutBuffer,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    update: usize,
    exec: Execution,
) -> Result<UpdateStats, PpoError> {
    buffer.check()?;
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(PpoError::ShapeMismatch {
            expected: buffer.len(),
            got: buffer.advantages.len(),
        });
    }
    let mut adv = buffer.advantages.clone();
    normalize_advantages(&mut adv);
    let coef = LossCoefficients::from(config);
    let n_params = ac.n_params();
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for (mb, idx) in order.chunks(config.batch_size).enumerate() {
            let scale = idx.len() as f64;
            let chunks: Vec<&[usize]> = idx.chunks(GRAD_CHUNK).collect();
            let snapshot = &*ac;
            let results = exec.map(&chunks, |c| {
                let mut g = vec![0.0; n_params];
                minibatch_loss(snapshot, buffer, &adv, c, &coef, Some(&mut g)).map(|p| (p, g, c.len() as f64))
            });
            let mut grad = vec![0.0; n_params];
            let mut parts = LossParts::default();
            for r in results {
                let (p, g, len) = r?;
                // Chunk losses are chunk means; reweight to the minibatch mean.
                let w = len / scale;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += w * gi;
                }
                parts.policy += w * p.policy;
                parts.value += w * p.value;
                parts.entropy += w * p.entropy;
                parts.clip_fraction += w * p.clip_fraction;
            }
            if !parts.total(&coef).is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PpoError::NonFiniteLoss {
                    update,
                    epoch,
                    minibatch: mb,
                });
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.max_grad_norm && norm > 0.0 {
                let s = config.max_grad_norm / norm;
                for g in &mut grad {
                    *g *= s;
                }
            }
            opt.step(&mut [ac.actor.params_mut(), ac.critic.params_mut()], &grad);
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
    }
    Ok(stats)
}

/// One training environment with its own random stream.
#[derive(Debug, Clone)]
struct EnvSlot {
    env: TrainingEnv,
    rng: ChaCha8Rng,
    episode_return: f64,
}

impl EnvSlot {
    fn new(config: &TrainConfig, index: usize) -> Self {
        let mut rng = crate::seed::rng(config.seed, 1 + index as u64);
        let s0 = sample_initial_state(&mut rng, &config.sampler);
        EnvSlot {
            env: TrainingEnv::new(s0, config.reward),
            rng,
            episode_return: 0.0,
        }
    }

    /// Collect `horizon` steps; returns the buffer with GAE applied and the
    /// returns of the episodes that finished.
    fn collect(&mut self, ac: &ActorCritic, config: &TrainConfig) -> (RolloutBuffer, Vec<f64>) {
        let mut buf = RolloutBuffer::default();
        let mut finished = Vec::new();
        for _ in 0..config.rollout_horizon {
            let x = self.env.state().features();
            let (a, logp, v) = ac.act(&x, &mut self.rng);
            let step = self
                .env
                .step(Action::from_index(a).expect("sampled index < N_ACTIONS"))
                .expect("environment is reset when done");
            self.episode_return += step.reward.total;
            buf.states.push(x);
            buf.actions.push(a);
            buf.log_probs.push(logp);
            buf.values.push(v);
            buf.rewards.push(step.reward.total);
            buf.dones.push(step.done);
            if step.done {
                finished.push(self.episode_return);
                self.episode_return = 0.0;
                let s0 = sample_initial_state(&mut self.rng, &config.sampler);
                self.env = TrainingEnv::new(s0, config.reward);
            }
        }
        buf.last_value = ac
            .critic
            .forward(&self.env.state().features())
            .expect("input width checked at config time")[0];
        let (adv, ret) = compute_gae(&buf, config.gamma, config.gae_lambda);
        buf.advantages = adv;
        buf.returns = ret;
        (buf, finished)
    }
}

/// One row of the training metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: usize,
    /// Environment steps so far, including this update.
    pub step: usize,
    pub episodes: usize,
    /// Mean return of the episodes finished in this rollout; NaN if none.
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub fn write_metrics<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<(), PpoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| PpoError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Stateful trainer: alternates rollout collection and [`ppo_update`].
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    ac: ActorCritic,
    opt: Adam,
    envs: Vec<EnvSlot>,
    steps: usize,
    updates: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, PpoError> {
        config.validate()?;
        let ac = ActorCritic::new(config.input_dim(), &config.hidden, config.seed);
        Ok(Self::with_policy(config, ac, 0, 0))
    }

    /// Continue from a checkpoint: weights and counters are restored, the
    /// optimiser moments and environments start fresh.
    pub fn resume(checkpoint: PolicyCheckpoint, config: TrainConfig) -> Result<Self, PpoError> {
        config.validate()?;
        if checkpoint.policy.input_dim() != config.input_dim() {
            return Err(PpoError::ShapeMismatch {
                expected: config.input_dim(),
                got: checkpoint.policy.input_dim(),
            });
        }
        Ok(Self::with_policy(
            config,
            checkpoint.policy,
            checkpoint.steps,
            checkpoint.updates,
        ))
    }

    fn with_policy(config: TrainConfig, ac: ActorCritic, steps: usize, updates: usize) -> Self {
        let opt = Adam::new(ac.n_params(), config.learning_rate);
        let envs = (0..config.n_envs)
            .map(|i| {
                let mut c = config.clone();
                c.seed = crate::seed::mix(config.seed, updates as u64);
                EnvSlot::new(&c, i)
            })
            .collect();
        Trainer {
            config,
            ac,
            opt,
            envs,
            steps,
            updates,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.config.total_steps
    }

    /// Collect one rollout from every environment and update the networks.
    pub fn update(&mut self, exec: Execution) -> Result<MetricsRow, PpoError> {
        let snapshot = &self.ac;
        let config = &self.config;
        let collected = exec.map_mut(&mut self.envs, |e| e.collect(snapshot, config));
        let mut buffer = RolloutBuffer::default();
        let mut finished = Vec::new();
        for (b, f) in collected {
            buffer.extend(b);
            finished.extend(f);
        }
        let mut rng = crate::seed::rng(crate::seed::mix(self.config.seed, 0x5eed), self.updates as u64);
        let stats = ppo_update(
            &mut self.ac,
            &mut self.opt,
            &buffer,
            &self.config,
            &mut rng,
            self.updates,
            exec,
        )?;
        self.steps += buffer.len();
        self.updates += 1;
        let mean_reward = if finished.is_empty() {
            f64::NAN
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        Ok(MetricsRow {
            update: self.updates,
            step: self.steps,
            episodes: finished.len(),
            mean_reward,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        })
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            policy: self.ac.clone(),
            config: self.config.clone(),
            steps: self.steps,
            updates: self.updates,
        }
    }
}

/// Final checkpoint and per-update metrics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PolicyCheckpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Train from scratch until `total_steps`.
pub fn train(config: &TrainConfig, exec: Execution) -> Result<TrainOutcome, PpoError> {
    let mut trainer = Trainer::new(config.clone())?;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        metrics.push(trainer.update(exec)?);
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        metrics,
    })
}

/// Mean greedy episode return and mean final |y_e − y_c| from the given
/// initial states.
pub fn evaluate_policy(policy: &dyn Policy, initial: &[StateVector], reward: &RewardConfig) -> Vec<(f64, f64)> {
    initial
        .iter()
        .map(|s0| {
            let mut env = TrainingEnv::new(s0.clone(), *reward);
            let mut ret = 0.0;
            while !env.is_done() {
                let a = policy.greedy(env.state());
                ret += env.step(a).expect("loop stops when done").reward.total;
            }
            let s = env.state();
            (ret, (s.y_e - s.y_c()).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            n_envs: 2,
            rollout_horizon: 32,
            batch_size: 16,
            epochs: 2,
            total_steps: 128,
            hidden: vec![8, 8],
            ..Default::default()
        }
    }

    fn buffer(rewards: &[f64], values: &[f64], dones: &[bool], last: f64) -> RolloutBuffer {
        let n = rewards.len();
        RolloutBuffer {
            states: vec![vec![]; n],
            actions: vec![0; n],
            log_probs: vec![0.0; n],
            values: values.to_vec(),
            rewards: rewards.to_vec(),
            dones: dones.to_vec(),
            last_value: last,
            ..Default::default()
        }
    }

    #[test]
    fn gae_single_terminal() {
        let b = buffer(&[2.5], &[0.7], &[true], 99.0);
        let (a, r) = compute_gae(&b, 0.99, 0.95);
        assert_eq!(a, vec![2.5 - 0.7]);
        assert_eq!(r, vec![2.5]);
    }

    #[test]
    fn gae_two_step_hand_unrolled() {
        let b = buffer(&[1.0, 2.0], &[0.0, 0.0], &[false, true], 0.0);
        let (a, _) = compute_gae(&b, 1.0, 1.0);
        assert_eq!(a, vec![3.0, 2.0]);
    }

    #[test]
    fn gae_bootstraps_open_tail() {
        let b = buffer(&[1.0], &[0.5], &[false], 2.0);
        let (a, _) = compute_gae(&b, 0.5, 0.9);
        assert_eq!(a, vec![1.0 + 0.5 * 2.0 - 0.5]);
    }

    #[test]
    fn uniform_for_zero_weights() {
        let mut ac = ActorCritic::new(13, &HIDDEN, 0);
        ac.actor.params_mut().fill(0.0);
        ac.critic.params_mut().fill(0.0);
        let (p, v) = ac.forward_features(&[0.3; 13]).unwrap();
        assert!(p.iter().all(|&x| x == 0.05));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let ac = ActorCritic::new(13, &HIDDEN, 4);
        let (p, _) = ac
            .forward_features(&[1.0, -2.0, 0.5, 3.0, -0.1, 1.0, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(p.len(), 20);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_width_is_error() {
        let ac = ActorCritic::new(13, &HIDDEN, 0);
        assert!(matches!(
            ac.forward_features(&[0.0; 9]),
            Err(PpoError::ShapeMismatch { expected: 13, got: 9 })
        ));
    }

    #[test]
    fn normalized_advantages() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 4.0;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(mean.abs() < 1e-12 && (std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(PpoError::Config(m)) if m.contains("gamma")));
        let bad = TrainConfig {
            clip_epsilon: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn toml_partial_and_unknown_keys() {
        let c = TrainConfig::from_toml("seed = 7\ntotal_steps = 4096\n[sampler]\ny_c_norm = 1.0\n").unwrap();
        assert_eq!((c.seed, c.total_steps, c.sampler.y_c_norm), (7, 4096, Some(1.0)));
        assert_eq!(c.gamma, 0.9999);
        assert!(TrainConfig::from_toml("gama = 0.9\n").is_err());
        assert!(matches!(TrainConfig::from_toml("gamma = 1.5\n"), Err(PpoError::Config(m)) if m.contains("gamma")));
    }

    #[test]
    fn zero_epochs_leave_params() {
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_config()
        };
        let mut t = Trainer::new(cfg).unwrap();
        let before = t.policy().clone();
        t.update(Execution::Sequential).unwrap();
        assert_eq!(&before, t.policy());
    }

    #[test]
    fn first_pass_has_no_clipping() {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1024,
            ..tiny_config()
        };
        let mut t = Trainer::new(cfg).unwrap();
        let row = t.update(Execution::Sequential).unwrap();
        assert_eq!(row.clip_fraction, 0.0);
    }

    #[test]
    fn training_is_deterministic_across_modes() {
        let a = train(&tiny_config(), Execution::Sequential).unwrap();
        let b = train(&tiny_config(), Execution::Parallel).unwrap();
        assert_eq!(a.checkpoint.policy, b.checkpoint.policy);
        assert_eq!(a.metrics.len(), 2);
        assert_eq!(a.checkpoint.steps, 128);
    }
}
