//! Training the reward network: epsilon-greedy rollouts, discounted returns,
//! experience replay and masked squared-error regression with Adam.

mod replay;
mod reward;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use replay::{EpisodeRecord, ReplayMemory};
pub use reward::{compute_returns, loss_episode, returns_from_counts, RewardConfig};

use crate::drn::{DrnConfig, DrnInput, DrnParams, DrnPicker};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig};
use crate::sched::{run_episode, EpisodeTrace, EpsilonGreedy};

/// Linear decay from `start` to `end` over the first `decay_fraction` of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration { start: 1.0, end: 0.05, decay_fraction: 0.5 }
    }
}

impl Exploration {
    pub fn epsilon(&self, iteration: usize, iterations: usize) -> f64 {
        let decay = (self.decay_fraction * iterations as f64).round();
        if decay <= 0.0 || iteration as f64 >= decay {
            return self.end;
        }
        self.start + (self.end - self.start) * iteration as f64 / decay
    }
}

/// Where each iteration's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioSource {
    /// A fresh instance per iteration, seeded from the run seed and iteration.
    Random(ScenarioConfig),
    /// The same instance every iteration.
    Fixed(Scenario),
}

impl ScenarioSource {
    fn instance(&self, seed: u64, iteration: usize) -> Result<Scenario> {
        match self {
            ScenarioSource::Random(cfg) => generate_scenario(&cfg.with_seed(derive_seed(seed, iteration as u64))),
            ScenarioSource::Fixed(s) => Ok(s.clone()),
        }
    }

    pub fn drn_config(&self) -> DrnConfig {
        match self {
            ScenarioSource::Random(cfg) => DrnConfig::for_scenario(cfg),
            ScenarioSource::Fixed(s) => {
                let scale = s.capacities.iter().copied().max().unwrap_or(1).max(1) as f64;
                DrnConfig::new(s.n, s.l, s.s, scale)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub exploration: Exploration,
    pub reward: RewardConfig,
    pub scenario: ScenarioSource,
    pub replay_capacity: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(scenario: ScenarioConfig, seed: u64) -> Self {
        TrainConfig {
            iterations: 500,
            batch_size: 256,
            learning_rate: 1e-4,
            exploration: Exploration::default(),
            reward: RewardConfig::default(),
            scenario: ScenarioSource::Random(scenario),
            replay_capacity: ReplayMemory::DEFAULT_CAPACITY,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config("iterations and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Config("replay capacity is smaller than the batch".into()));
        }
        let ex = &self.exploration;
        if ![ex.start, ex.end].iter().all(|e| (0.0..=1.0).contains(e)) {
            return Err(Error::Config("exploration rates must lie in [0, 1]".into()));
        }
        self.reward.validate()?;
        match &self.scenario {
            ScenarioSource::Random(cfg) => cfg.validate(),
            ScenarioSource::Fixed(s) => s.validate(),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    /// Batch loss; absent until the replay memory holds a full batch.
    pub loss: Option<f64>,
    pub n_r: usize,
    pub epsilon: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    /// Mean accommodated count over iterations `range`.
    pub fn mean_n_r(&self, range: std::ops::Range<usize>) -> f64 {
        let rows = &self.rows[range];
        rows.iter().map(|r| r.n_r as f64).sum::<f64>() / rows.len().max(1) as f64
    }

    /// Writes `iteration,loss,n_r,epsilon,wall_ms`; wall-clock values only when `timing` is set.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>, timing: bool) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), source: e };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["iteration", "loss", "n_r", "epsilon", "wall_ms"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.loss.map(|l| l.to_string()).unwrap_or_default(),
                r.n_r.to_string(),
                r.epsilon.to_string(),
                if timing { r.wall_ms.to_string() } else { "0".into() },
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One episode with the network choosing greedily except, with probability
/// `epsilon`, a uniformly random feasible slice.
pub fn rollout(params: &DrnParams, scenario: &Scenario, epsilon: f64, rng: &mut impl Rng) -> Result<EpisodeTrace> {
    let mut greedy = DrnPicker { params };
    let mut picker = EpsilonGreedy { inner: &mut greedy, epsilon, rng };
    run_episode(&mut picker, scenario)
}

// Samples per forward/backward chunk; bounds the memory held by caches.
const CHUNK: usize = 512;

/// One optimizer step on a batch of episodes. The loss is the mean over
/// episodes of each episode's summed masked squared error. Returns the loss
/// measured before the update.
pub fn train_step(params: &mut DrnParams, batch: &[&EpisodeRecord], lr: f64) -> Result<f64> {
    let cfg = params.config.clone();
    let samples: Vec<(&EpisodeRecord, usize)> =
        batch.iter().flat_map(|ep| (0..ep.len()).map(move |t| (*ep, t))).collect();
    let norm = 1.0 / batch.len().max(1) as f64;
    params.net.zero_grad();
    let mut loss = 0.0;
    for chunk in samples.chunks(CHUNK) {
        let encoded: Vec<(Vec<f64>, Vec<f64>)> = chunk.iter().map(|(ep, t)| ep.states[*t].encode(cfg.scale)).collect();
        let inputs: Vec<DrnInput<'_>> = encoded.iter().map(|(s, d)| DrnInput { sub: s, dem: d }).collect();
        let rows: Vec<(usize, usize)> = chunk.iter().enumerate().map(|(i, (ep, t))| (i, ep.actions[*t])).collect();
        let (pred, cache) = params.net.forward_rows(&cfg, &inputs, &rows)?;
        let mut grad = Vec::with_capacity(pred.len());
        for (p, (ep, t)) in pred.iter().zip(chunk) {
            let diff = p - ep.targets[*t];
            loss += diff * diff * norm;
            grad.push(2.0 * diff * norm);
        }
        params.net.backward_rows(&cfg, &cache, &grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss} at iteration {}", params.iteration)));
    }
    if !samples.is_empty() {
        params.adam.step(&mut params.net.params_and_grads(), lr)?;
    }
    Ok(loss)
}

/// Trains a fresh network; `on_iteration` sees every log row as it is produced.
pub fn train_with(cfg: &TrainConfig, mut on_iteration: impl FnMut(&LogRow)) -> Result<(DrnParams, TrainLog)> {
    cfg.validate()?;
    let l = cfg.scenario.drn_config().l;
    let mut params = DrnParams::build(cfg.scenario.drn_config(), cfg.seed)?;
    params.provenance = Some(serde_json::to_value(cfg).map_err(|e| Error::Misuse(e.to_string()))?);
    let mut explore = stream_rng(cfg.seed, Stream::Exploration);
    let mut replay_rng = stream_rng(cfg.seed, Stream::Replay);
    let mut memory = ReplayMemory::new(cfg.replay_capacity);
    let mut log = TrainLog::default();
    let start = Instant::now();

    for it in 0..cfg.iterations {
        let epsilon = cfg.exploration.epsilon(it, cfg.iterations);
        let scenario = cfg.scenario.instance(cfg.seed, it)?;
        let trace = rollout(&params, &scenario, epsilon, &mut explore)?;
        let n_r = trace.accommodated();
        let targets = compute_returns(&trace, &cfg.reward, l);
        memory.push(EpisodeRecord::from_trace(&trace, targets));

        let mut loss = None;
        if memory.len() >= cfg.batch_size {
            let picks = memory.sample_past(cfg.batch_size - 1, &mut replay_rng);
            let mut batch: Vec<&EpisodeRecord> = picks.iter().filter_map(|&i| memory.get(i)).collect();
            batch.extend(memory.latest());
            loss = Some(train_step(&mut params, &batch, cfg.learning_rate)?);
        }
        params.iteration += 1;
        let row = LogRow { iteration: it, loss, n_r, epsilon, wall_ms: start.elapsed().as_millis() as u64 };
        on_iteration(&row);
        log.rows.push(row);
    }
    Ok((params, log))
}

pub fn train(cfg: &TrainConfig) -> Result<(DrnParams, TrainLog)> {
    train_with(cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn weights(p: &DrnParams) -> Vec<(String, Tensor)> {
        p.net.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect()
    }

    fn tiny() -> TrainConfig {
        TrainConfig { iterations: 30, batch_size: 8, ..TrainConfig::new(ScenarioConfig::mini(), 3) }
    }

    #[test]
    fn exploration_schedule() {
        let ex = Exploration::default();
        assert_eq!(ex.epsilon(0, 100), 1.0);
        assert!((ex.epsilon(25, 100) - 0.525).abs() < 1e-12);
        assert_eq!(ex.epsilon(50, 100), 0.05);
        assert_eq!(ex.epsilon(99, 100), 0.05);
    }

    #[test]
    fn no_update_before_memory_fills() {
        let cfg = TrainConfig { iterations: 7, ..tiny() };
        let (params, log) = train(&cfg).unwrap();
        assert!(log.rows.iter().all(|r| r.loss.is_none()));
        assert_eq!(weights(&params), weights(&DrnParams::build(cfg.scenario.drn_config(), cfg.seed).unwrap()));
        let cfg = TrainConfig { iterations: 8, ..tiny() };
        let (_, log) = train(&cfg).unwrap();
        assert!(log.rows[7].loss.is_some());
        assert!(log.rows[..7].iter().all(|r| r.loss.is_none()));
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let cfg = TrainConfig { learning_rate: 0.0, ..tiny() };
        let (params, log) = train(&cfg).unwrap();
        assert!(log.rows.iter().filter(|r| r.loss.is_some()).count() > 0);
        assert_eq!(weights(&params), weights(&DrnParams::build(cfg.scenario.drn_config(), cfg.seed).unwrap()));
        assert!(params.adam.step > 0);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = tiny();
        let (a, la) = train(&cfg).unwrap();
        let (b, lb) = train(&cfg).unwrap();
        assert_eq!(a, b);
        let strip = |l: &TrainLog| l.rows.iter().map(|r| (r.loss.map(f64::to_bits), r.n_r)).collect::<Vec<_>>();
        assert_eq!(strip(&la), strip(&lb));
        assert!(a.all_finite());
    }

    #[test]
    fn greedy_rollout_matches_evaluation() {
        let cfg = ScenarioConfig::mini().with_seed(4);
        let scenario = generate_scenario(&cfg).unwrap();
        let params = DrnParams::build(DrnConfig::for_scenario(&cfg), 1).unwrap();
        let mut rng = stream_rng(0, Stream::Exploration);
        let a = rollout(&params, &scenario, 0.0, &mut rng).unwrap();
        let b = run_episode(&mut DrnPicker { params: &params }, &scenario).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_exploration_picks_feasible_slices() {
        let cfg = ScenarioConfig::mini();
        let params = DrnParams::build(DrnConfig::for_scenario(&cfg), 1).unwrap();
        let mut rng = stream_rng(0, Stream::Exploration);
        let mut first_actions = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let scenario = generate_scenario(&cfg.with_seed(seed % 2)).unwrap();
            let trace = rollout(&params, &scenario, 1.0, &mut rng).unwrap();
            for step in &trace.steps {
                assert!(step.feasible[step.action]);
            }
            if seed % 2 == 0 {
                first_actions.insert(trace.steps[0].action);
            }
        }
        // Twenty random draws on one instance reach several different first slices.
        assert!(first_actions.len() > 2);
    }

    #[test]
    fn train_step_loss_matches_episode_loss() {
        let cfg = ScenarioConfig::mini().with_seed(8);
        let scenario = generate_scenario(&cfg).unwrap();
        let mut params = DrnParams::build(DrnConfig::for_scenario(&cfg), 2).unwrap();
        let trace = run_episode(&mut DrnPicker { params: &params }, &scenario).unwrap();
        let targets = compute_returns(&trace, &RewardConfig::default(), cfg.l);
        let preds: Vec<Vec<f64>> = trace.steps.iter().map(|s| params.forward_snapshot(&s.state).unwrap()).collect();
        let masks: Vec<Vec<bool>> =
            trace.steps.iter().map(|s| (0..cfg.l).map(|i| i == s.action).collect()).collect();
        let expect = loss_episode(&preds, &targets, &masks).unwrap();
        let rec = EpisodeRecord::from_trace(&trace, targets);
        let got = train_step(&mut params, &[&rec, &rec], 0.0).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect.max(1.0), "{got} vs {expect}");
    }
}
