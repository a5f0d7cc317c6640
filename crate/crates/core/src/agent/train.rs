//! The training loop: episodes of rounds of pricing steps, with one critic
//! and one actor update after every step.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::critic::{update_critic, Critic};
use super::policy::{update_actor, ActionRange, ChainNoise, DiffusionPolicy};
use super::replay::{ReplayBuffer, Transition};
use super::schedule::DiffusionSchedule;
use crate::csv::{fmt_f64, CsvHeader};
use crate::env::{EpisodeLog, MarketEnv, PomdpState, StateLayout, StepRecord, DEFAULT_HISTORY_LEN};
use crate::error::{Error, Result};
use crate::nn::{soft_update, AdamState};
use crate::stackelberg::MarketConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub denoising_steps: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    /// Only used when `bootstrap` is set.
    pub discount: f64,
    pub weight_decay: f64,
    pub episodes: usize,
    pub rounds: usize,
    pub steps: usize,
    /// Initial exploration std as a fraction of `p_max - c`.
    pub exploration_scale: f64,
    /// Per-round multiplier on the exploration std.
    pub exploration_decay: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Regress the critic on `r + discount * Q'(e', a')` instead of `r`.
    pub bootstrap: bool,
    /// Empty the replay buffer at the start of every episode.
    pub reset_replay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            denoising_steps: 5,
            buffer_capacity: 1_000_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            discount: 0.95,
            weight_decay: 1e-4,
            episodes: 1000,
            rounds: 10,
            steps: 1,
            exploration_scale: 0.1,
            exploration_decay: 0.999,
            beta_start: 1e-4,
            beta_end: 0.2,
            hidden: 256,
            embed_dim: 8,
            bootstrap: false,
            reset_replay: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("denoising_steps", self.denoising_steps),
            ("buffer_capacity", self.buffer_capacity),
            ("episodes", self.episodes),
            ("rounds", self.rounds),
            ("steps", self.steps),
            ("hidden", self.hidden),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds buffer_capacity {}",
                self.batch_size, self.buffer_capacity
            )));
        }
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("beta_start", self.beta_start),
            ("beta_end", self.beta_end),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("tau", self.tau),
            ("discount", self.discount),
            ("exploration_decay", self.exploration_decay),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if !(self.exploration_scale >= 0.0 && self.exploration_scale.is_finite()) {
            return Err(Error::invalid("exploration_scale must be >= 0"));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.denoising_steps, self.beta_start, self.beta_end)
    }
}

/// Observation settings shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub history_len: usize,
    pub state_layout: StateLayout,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            history_len: DEFAULT_HISTORY_LEN,
            state_layout: StateLayout::Aggregate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub mean_reward: f64,
    /// NaN when no update ran.
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub wall_ms: f64,
}

pub const CURVE_COLUMNS: &str = "episode,mean_reward,critic_loss,actor_loss,wall_ms";

/// Renders training curves. `wall_ms` is the only column that varies
/// between identical runs.
pub fn curves_csv(curves: &[EpisodeSummary], header: &CsvHeader) -> String {
    let mut out = header.render();
    out.push_str(CURVE_COLUMNS);
    out.push('\n');
    for c in curves {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.episode,
            fmt_f64(c.mean_reward),
            fmt_f64(c.critic_loss),
            fmt_f64(c.actor_loss),
            fmt_f64(c.wall_ms)
        ));
    }
    out
}

/// Mean of the last `window` values (or all of them if fewer).
pub fn tail_mean(values: &[f64], window: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(window)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    /// `u128` does not survive every JSON reader, so it is kept as text.
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub policy: DiffusionPolicy,
    pub critic: Critic,
    pub target_policy: DiffusionPolicy,
    pub target_critic: Critic,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    replay: ReplayBuffer,
    rng: RngState,
    window: PomdpState,
    pub exploration_std: f64,
    pub episode: usize,
    pub log: EpisodeLog,
    pub curves: Vec<EpisodeSummary>,
}

pub const CHECKPOINT_FORMAT: &str = "semcom-gdm-checkpoint-v1";

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown checkpoint format {:?}", ck.format)));
        }
        Ok(ck)
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: DiffusionPolicy,
    pub critic: Critic,
    pub log: EpisodeLog,
    pub curves: Vec<EpisodeSummary>,
}

impl TrainOutcome {
    pub fn episode_rewards(&self) -> Vec<f64> {
        self.curves.iter().map(|c| c.mean_reward).collect()
    }

    /// Mean reward over the last `window` episodes.
    pub fn final_mean_reward(&self, window: usize) -> f64 {
        tail_mean(&self.episode_rewards(), window)
    }
}

#[derive(Debug, Clone)]
pub struct Trainer {
    tc: TrainConfig,
    env_cfg: EnvConfig,
    env: MarketEnv,
    policy: DiffusionPolicy,
    critic: Critic,
    target_policy: DiffusionPolicy,
    target_critic: Critic,
    actor_opt: AdamState,
    critic_opt: AdamState,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    exploration_std: f64,
    episode: usize,
    log: EpisodeLog,
    curves: Vec<EpisodeSummary>,
}

impl Trainer {
    pub fn new(market: MarketConfig, env_cfg: EnvConfig, tc: TrainConfig, config_hash: &str) -> Result<Self> {
        tc.validate()?;
        market.validate()?;
        if env_cfg.history_len == 0 {
            return Err(Error::invalid("history_len must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        let env = MarketEnv::new(market, env_cfg.history_len, env_cfg.state_layout, &mut rng);
        let dim = env.feature_dim();
        let range = ActionRange {
            low: env.config().unit_cost,
            high: env.config().price_cap,
        };
        let policy = DiffusionPolicy::new(dim, tc.hidden, tc.embed_dim, tc.schedule()?, range, &mut rng);
        let critic = Critic::new(dim, tc.hidden, range.high, &mut rng);
        let actor_opt = AdamState::for_net(policy.net(), tc.actor_lr, tc.weight_decay);
        let critic_opt = AdamState::for_net(critic.net(), tc.critic_lr, tc.weight_decay);
        let exploration_std = tc.exploration_scale * (range.high - range.low);
        Ok(Self {
            env_cfg,
            env,
            target_policy: policy.clone(),
            target_critic: critic.clone(),
            policy,
            critic,
            actor_opt,
            critic_opt,
            replay: ReplayBuffer::new(tc.buffer_capacity),
            rng,
            exploration_std,
            episode: 0,
            log: EpisodeLog::new(tc.seed, config_hash),
            curves: Vec::new(),
            tc,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.tc
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.episode >= self.tc.episodes
    }

    pub fn policy(&self) -> &DiffusionPolicy {
        &self.policy
    }

    pub fn critic(&self) -> &Critic {
        &self.critic
    }

    pub fn curves(&self) -> &[EpisodeSummary] {
        &self.curves
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// Replace the online policy (and its target), e.g. with a pretrained one.
    pub fn set_policy(&mut self, policy: DiffusionPolicy) -> Result<()> {
        if policy.state_dim() != self.policy.state_dim() || policy.net().sizes() != self.policy.net().sizes() {
            return Err(Error::ShapeMismatch {
                expected: self.policy.net().param_count(),
                actual: policy.net().param_count(),
            });
        }
        self.target_policy = policy.clone();
        self.policy = policy;
        Ok(())
    }

    /// Runs one episode and returns its summary.
    pub fn run_episode(&mut self) -> Result<EpisodeSummary> {
        let started = Instant::now();
        if self.tc.reset_replay {
            self.replay.clear();
        }
        self.env.reset(&mut self.rng);
        let (low, high) = (self.env.config().unit_cost, self.env.config().price_cap);
        let mut reward_sum = 0.0;
        let (mut closs, mut cn, mut aloss, mut an) = (0.0, 0usize, 0.0, 0usize);
        for round in 0..self.tc.rounds {
            for step in 0..self.tc.steps {
                let state = self.env.observe();
                let action = self.policy.sample_action(&state, &mut self.rng, false)?;
                let price = if self.exploration_std > 0.0 {
                    let noise = Normal::new(0.0, self.exploration_std).expect("finite std");
                    (action.price + noise.sample(&mut self.rng)).clamp(low, high)
                } else {
                    action.price
                };
                let out = self.env.step(price);
                reward_sum += out.reward;
                self.log.records.push(StepRecord {
                    episode: self.episode,
                    round,
                    step,
                    price: out.price,
                    aggregate_demand: out.aggregate_demand(),
                    reward: out.reward,
                });
                self.replay.push(Transition {
                    state,
                    action: out.price / high,
                    reward: out.reward,
                    next_state: self.env.observe(),
                });
                if let Some((c, a)) = self.learn()? {
                    closs += c;
                    cn += 1;
                    aloss += a;
                    an += 1;
                }
            }
            self.exploration_std *= self.tc.exploration_decay;
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        let summary = EpisodeSummary {
            episode: self.episode,
            mean_reward: reward_sum / (self.tc.rounds * self.tc.steps) as f64,
            critic_loss: mean(closs, cn),
            actor_loss: mean(aloss, an),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.curves.push(summary.clone());
        self.episode += 1;
        Ok(summary)
    }

    /// One critic and one actor step on a shared minibatch.
    fn learn(&mut self) -> Result<Option<(f64, f64)>> {
        let batch = self.replay.sample(self.tc.batch_size, &mut self.rng);
        if batch.len() < 2 {
            return Ok(None);
        }
        let dim = batch[0].state.len();
        let scale = self.critic.price_scale();
        let states = Array2::from_shape_fn((batch.len(), dim), |(i, j)| batch[i].state[j]);
        let prices = Array1::from_iter(batch.iter().map(|t| t.action * scale));
        let mut targets = Array1::from_iter(batch.iter().map(|t| t.reward));
        if self.tc.bootstrap {
            let next = Array2::from_shape_fn((batch.len(), dim), |(i, j)| batch[i].next_state[j]);
            let noise = ChainNoise::sample(batch.len(), self.tc.denoising_steps, &mut self.rng);
            let next_prices = self.target_policy.prices(next.view(), &noise)?;
            let next_q = self.target_critic.q(next.view(), next_prices.view());
            targets.scaled_add(self.tc.discount, &next_q);
        }
        let closs = update_critic(&mut self.critic, states.view(), prices.view(), targets.view(), &mut self.critic_opt)
            .expect("batch has at least two rows");
        let aloss = update_actor(&mut self.policy, &self.critic, states.view(), &mut self.actor_opt, &mut self.rng)?;
        soft_update(self.target_policy.net_mut(), self.policy.net(), self.tc.tau);
        soft_update(self.target_critic.net_mut(), self.critic.net(), self.tc.tau);
        Ok(Some((closs, aloss)))
    }

    /// Runs until `episodes` are done, calling `on_episode` after each.
    pub fn run_with(&mut self, mut on_episode: impl FnMut(&Self, &EpisodeSummary)) -> Result<()> {
        while !self.is_done() {
            let s = self.run_episode()?;
            on_episode(self, &s);
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_, _| {})
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            train: self.tc.clone(),
            env: self.env_cfg,
            policy: self.policy.clone(),
            critic: self.critic.clone(),
            target_policy: self.target_policy.clone(),
            target_critic: self.target_critic.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            replay: self.replay.clone(),
            rng: RngState::capture(&self.rng),
            window: self.env.state().clone(),
            exploration_std: self.exploration_std,
            episode: self.episode,
            log: self.log.clone(),
            curves: self.curves.clone(),
        }
    }

    /// Continues a checkpointed run on `market`.
    pub fn resume(market: MarketConfig, ck: Checkpoint) -> Result<Self> {
        ck.train.validate()?;
        market.validate()?;
        let env = MarketEnv::with_state(market, ck.env.state_layout, ck.window);
        if env.feature_dim() != ck.policy.state_dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} state features, market gives {}",
                ck.policy.state_dim(),
                env.feature_dim()
            )));
        }
        Ok(Self {
            rng: ck.rng.restore()?,
            tc: ck.train,
            env_cfg: ck.env,
            env,
            policy: ck.policy,
            critic: ck.critic,
            target_policy: ck.target_policy,
            target_critic: ck.target_critic,
            actor_opt: ck.actor_opt,
            critic_opt: ck.critic_opt,
            replay: ck.replay,
            exploration_std: ck.exploration_std,
            episode: ck.episode,
            log: ck.log,
            curves: ck.curves,
        })
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            policy: self.policy,
            critic: self.critic,
            log: self.log,
            curves: self.curves,
        }
    }
}

/// Full training run.
pub fn train(market: &MarketConfig, env_cfg: EnvConfig, tc: &TrainConfig, config_hash: &str) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(market.clone(), env_cfg, tc.clone(), config_hash)?;
    trainer.run()?;
    Ok(trainer.finish())
}

/// Rolls a frozen policy with noise-free inference. Returns per-episode
/// mean rewards.
pub fn evaluate(
    policy: &DiffusionPolicy,
    market: &MarketConfig,
    env_cfg: EnvConfig,
    episodes: usize,
    rounds: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MarketEnv::new(market.clone(), env_cfg.history_len, env_cfg.state_layout, &mut rng);
    if env.feature_dim() != policy.state_dim() {
        return Err(Error::ShapeMismatch {
            expected: policy.state_dim(),
            actual: env.feature_dim(),
        });
    }
    let mut means = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(&mut rng);
        let mut total = 0.0;
        for _ in 0..rounds {
            let price = policy.infer(&env.observe(), draws, &mut rng)?;
            total += env.step(price).reward;
        }
        means.push(total / rounds.max(1) as f64);
    }
    Ok(means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseNet, HIDDEN_ACTIVATION};
    use crate::scenario;

    fn small() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            buffer_capacity: 64,
            episodes: 4,
            rounds: 3,
            hidden: 12,
            embed_dim: 4,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            batch_size: 10,
            buffer_capacity: 5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            tau: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn same_seed_same_trace() {
        let m = scenario::default_market();
        let a = train(&m, EnvConfig::default(), &small(), "h").unwrap();
        let b = train(&m, EnvConfig::default(), &small(), "h").unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.episode_rewards(), b.episode_rewards());
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.log.records.len(), 12);
        for r in &a.log.records {
            assert!(r.price >= 2.0 && r.price <= 20.0);
        }
    }

    #[test]
    fn checkpoint_resume_is_bit_exact() {
        let m = scenario::default_market();
        let mut whole = Trainer::new(m.clone(), EnvConfig::default(), small(), "h").unwrap();
        whole.run().unwrap();
        let mut first = Trainer::new(m.clone(), EnvConfig::default(), small(), "h").unwrap();
        first.run_episode().unwrap();
        first.run_episode().unwrap();
        let text = first.checkpoint().to_json().unwrap();
        let mut resumed = Trainer::resume(m, Checkpoint::from_json(&text).unwrap()).unwrap();
        resumed.run().unwrap();
        assert_eq!(resumed.log(), whole.log());
        assert_eq!(resumed.policy(), whole.policy());
        assert_eq!(resumed.critic(), whole.critic());
        let strip = |c: &[EpisodeSummary]| c.iter().map(|s| (s.mean_reward, s.critic_loss, s.actor_loss)).collect::<Vec<_>>();
        assert_eq!(
            format!("{:?}", strip(resumed.curves())),
            format!("{:?}", strip(whole.curves()))
        );
        assert_eq!(resumed.checkpoint().to_json().unwrap().len() > 0, true);
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        assert!(Checkpoint::from_json("{}").is_err());
    }

    #[test]
    fn reset_replay_flag_empties_buffer() {
        let m = scenario::default_market();
        let tc = TrainConfig {
            reset_replay: true,
            ..small()
        };
        let mut t = Trainer::new(m, EnvConfig::default(), tc, "h").unwrap();
        t.run().unwrap();
        assert_eq!(t.replay_len(), 3);
    }

    #[test]
    fn bootstrap_mode_runs() {
        let m = scenario::default_market();
        let tc = TrainConfig {
            bootstrap: true,
            ..small()
        };
        let out = train(&m, EnvConfig::default(), &tc, "h").unwrap();
        assert!(out.curves.iter().all(|c| c.mean_reward.is_finite()));
    }

    #[test]
    fn tail_mean_windows() {
        assert_eq!(tail_mean(&[1.0, 2.0, 3.0, 4.0], 2), 3.5);
        assert_eq!(tail_mean(&[1.0, 2.0], 50), 1.5);
        assert!(tail_mean(&[], 3).is_nan());
    }

    /// Policy whose chain maps every `s_N` to `price`: one hidden unit per
    /// layer passes `s_n + 100` through SiLU (exact at that offset) and the
    /// output cancels it against the state coefficient.
    fn policy_fixed_at(template: &DiffusionPolicy, price: f64) -> DiffusionPolicy {
        let sched = template.schedule().clone();
        assert_eq!(sched.steps(), 1);
        let range = template.range();
        let raw = (2.0 * (price - range.low) / (range.high - range.low) - 1.0).atanh();
        let (k1, k2) = (sched.state_coef(1), sched.noise_pred_coef(1));
        let (a, b) = (k1 / k2, -raw / k2);
        let mut net = DenseNet::zeros(&template.net().sizes(), HIDDEN_ACTIVATION, Activation::Identity);
        let layers = net.layers_mut();
        layers[0].weight[[0, 0]] = 1.0;
        layers[0].bias[0] = 100.0;
        layers[1].weight[[0, 0]] = 1.0;
        layers[2].weight[[0, 0]] = a;
        layers[2].bias[0] = b - 100.0 * a;
        DiffusionPolicy::from_net(net, template.state_dim(), template.net().input_dim() - 1 - template.state_dim(), sched, range).unwrap()
    }

    #[test]
    fn optimal_policy_without_exploration_is_a_fixed_point() {
        let m = scenario::default_market();
        let eq = crate::stackelberg::equilibrium(&m).unwrap();
        // Effectively frozen actor: the reward trace must sit at the optimum.
        let tc = TrainConfig {
            denoising_steps: 1,
            exploration_scale: 0.0,
            actor_lr: 1e-15,
            ..small()
        };
        let mut t = Trainer::new(m.clone(), EnvConfig::default(), tc, "h").unwrap();
        let fixed = policy_fixed_at(t.policy(), eq.price);
        t.set_policy(fixed).unwrap();
        t.run().unwrap();
        assert_eq!(t.log().records.len(), 12);
        for r in &t.log().records {
            assert!((r.reward - eq.leader_utility).abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn critic_loss_falls_on_a_fixed_batch() {
        let m = scenario::default_market();
        let tc = TrainConfig {
            batch_size: 256,
            buffer_capacity: 4096,
            episodes: 30,
            rounds: 10,
            hidden: 64,
            exploration_scale: 0.5,
            ..small()
        };
        let mut t = Trainer::new(m, EnvConfig::default(), tc, "h").unwrap();
        t.run().unwrap();
        let batch = t.replay.sample(256, &mut t.rng);
        let dim = batch[0].state.len();
        let scale = t.critic.price_scale();
        let states = Array2::from_shape_fn((batch.len(), dim), |(i, j)| batch[i].state[j]);
        let prices = Array1::from_iter(batch.iter().map(|x| x.action * scale));
        let targets = Array1::from_iter(batch.iter().map(|x| x.reward));
        let mut critic = t.critic.clone();
        let mut adam = t.critic_opt.clone();
        let losses: Vec<f64> = (0..100)
            .map(|_| update_critic(&mut critic, states.view(), prices.view(), targets.view(), &mut adam).unwrap())
            .collect();
        let smoothed: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        assert!(smoothed.windows(2).all(|w| w[1] <= w[0]), "{smoothed:?}");
    }
}
