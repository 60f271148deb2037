//! Step loop: observe, decide, emulate, book the queue.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emulate::{emulate_detector, Emulation};
use super::scenario::{EstimateSource, Regime, ScenarioConfig};
use super::scene::{FrameObservation, SceneGenerator};
use crate::controller::{
    arrival, performance, queue_update, service, ControllerConfig, ModelChoice, StepObservation,
};
use crate::detection::{score_against_truth, DetectionMetrics};
use crate::error::{Error, Result};
use crate::policies::mlp::{MlpParams, DEFAULT_DIMS};
use crate::policies::{AdamConfig, Policy, PolicyKind, PolicyState, ReinforceAgent, Transition};

/// Offset that separates the policy's sampling stream from the scene stream.
const POLICY_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Where frames come from.
#[derive(Debug, Clone)]
pub enum FrameSource {
    Generated(Box<SceneGenerator>),
    Replay {
        frames: Vec<FrameObservation>,
        cursor: usize,
    },
}

impl FrameSource {
    pub fn generated(scenario: &ScenarioConfig, seed: u64) -> Self {
        FrameSource::Generated(Box::new(SceneGenerator::new(scenario.clone(), seed)))
    }

    pub fn replay(frames: Vec<FrameObservation>) -> Self {
        FrameSource::Replay { frames, cursor: 0 }
    }

    /// Frames left, or `None` for an unbounded generator.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            FrameSource::Generated(_) => None,
            FrameSource::Replay { frames, cursor } => Some(frames.len() - cursor),
        }
    }

    fn next_frame(&mut self) -> Result<FrameObservation> {
        match self {
            FrameSource::Generated(g) => g.next_frame(),
            FrameSource::Replay { frames, cursor } => {
                let frame = frames
                    .get(*cursor)
                    .cloned()
                    .ok_or_else(|| Error::Validation("trace exhausted".into()))?;
                *cursor += 1;
                Ok(frame)
            }
        }
    }
}

/// One simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub regime: Regime,
    pub alpha: ModelChoice,
    /// Backlog observed before the decision.
    pub q: f64,
    pub a: f64,
    pub b: f64,
    /// Performance `P(alpha)`.
    pub performance: f64,
    /// Seconds per cycle of the chosen model.
    pub latency: f64,
    pub metrics: DetectionMetrics,
    pub truth_count: usize,
    pub num_hybrid: usize,
    pub num_odn: usize,
    /// FLOPs spent on this decision.
    pub flops: u64,
    pub cumulative_flops: u64,
    pub state: PolicyState,
}

impl StepRecord {
    /// `V * P(alpha) + Q * b(alpha)`, the learned policy's reward.
    pub fn reward(&self, cfg: &ControllerConfig) -> f64 {
        cfg.v * self.performance + self.q * self.b
    }

    pub fn recall(&self) -> f64 {
        self.metrics.recall(self.truth_count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub policy: PolicyKind,
    pub records: Vec<StepRecord>,
    /// Backlog after the last step.
    pub final_q: f64,
    pub overflow_cap: f64,
}

/// Aggregates over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub avg_q: f64,
    pub max_q: f64,
    pub final_q: f64,
    /// Time-averaged true-positive rate.
    pub avg_tpr: f64,
    pub avg_recall: f64,
    pub avg_performance: f64,
    /// Mean of `a - b` per step.
    pub drift: f64,
    pub hybrid_decisions: usize,
    pub odn_decisions: usize,
    pub total_flops: u64,
    pub overflow: bool,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(Q, a, b)` per step.
    pub fn trajectory(&self) -> Vec<(f64, f64, f64)> {
        self.records.iter().map(|r| (r.q, r.a, r.b)).collect()
    }

    /// Backlog series `Q[0..=T]` rebuilt from the recorded arrivals and services.
    pub fn replay_queue(&self) -> Result<Vec<f64>> {
        let mut q = 0.0;
        let mut out = Vec::with_capacity(self.records.len() + 1);
        out.push(q);
        for r in &self.records {
            q = queue_update(q, r.a, r.b)?;
            out.push(q);
        }
        Ok(out)
    }

    /// Recorded backlog series including the final value.
    pub fn queue_series(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.records.iter().map(|r| r.q).collect();
        out.push(self.final_q);
        out
    }

    pub fn total_reward(&self, cfg: &ControllerConfig) -> f64 {
        self.records.iter().map(|r| r.reward(cfg)).sum()
    }

    pub fn transitions(&self, cfg: &ControllerConfig) -> Vec<Transition> {
        self.records
            .iter()
            .map(|r| Transition {
                state: r.state.clone(),
                action: r.alpha,
                reward: r.reward(cfg),
            })
            .collect()
    }

    /// Summary with all-zero fields for an empty run.
    pub fn summary(&self) -> Summary {
        summarize(self).unwrap_or_default()
    }
}

/// Aggregates a non-empty run.
pub fn summarize(result: &SimResult) -> Result<Summary> {
    let records = &result.records;
    if records.is_empty() {
        return Err(Error::Validation("cannot summarize an empty run".into()));
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&StepRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let max_q = result.queue_series().into_iter().fold(0.0, f64::max);
    let hybrid = records
        .iter()
        .filter(|r| r.alpha == ModelChoice::Hybrid)
        .count();
    Ok(Summary {
        steps: records.len(),
        avg_q: mean(&|r| r.q),
        max_q,
        final_q: result.final_q,
        avg_tpr: mean(&|r| r.metrics.true_positive_rate),
        avg_recall: mean(&|r| r.recall()),
        avg_performance: mean(&|r| r.performance),
        drift: mean(&|r| r.a - r.b),
        hybrid_decisions: hybrid,
        odn_decisions: records.len() - hybrid,
        total_flops: records.iter().map(|r| r.flops).sum(),
        overflow: max_q > result.overflow_cap,
    })
}

/// Mutable run state owned by a single driver.
#[derive(Debug)]
pub struct Simulation {
    scenario: ScenarioConfig,
    controller: ControllerConfig,
    source: FrameSource,
    policy_rng: ChaCha8Rng,
    q: f64,
    prev_arrival: f64,
    prev_service: f64,
    prev_estimate: StepObservation,
    cumulative_flops: u64,
    t: usize,
}

impl Simulation {
    pub fn new(
        scenario: ScenarioConfig,
        controller: ControllerConfig,
        source: FrameSource,
        seed: u64,
    ) -> Result<Self> {
        scenario.validate()?;
        controller.validate()?;
        let prev_estimate = StepObservation {
            latency_hybrid: scenario.latency.base(ModelChoice::Hybrid),
            latency_odn: scenario.latency.base(ModelChoice::Odn),
            ..StepObservation::default()
        };
        Ok(Self {
            scenario,
            controller,
            source,
            policy_rng: ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM),
            q: 0.0,
            prev_arrival: 0.0,
            prev_service: 0.0,
            prev_estimate,
            cumulative_flops: 0,
            t: 0,
        })
    }

    /// Generated frames seeded with `seed`.
    pub fn generated(
        scenario: ScenarioConfig,
        controller: ControllerConfig,
        seed: u64,
    ) -> Result<Self> {
        let source = FrameSource::generated(&scenario, seed);
        Self::new(scenario, controller, source, seed)
    }

    pub fn backlog(&self) -> f64 {
        self.q
    }

    /// Frame, decision, emulation, queue update.
    pub fn step(&mut self, policy: &Policy) -> Result<StepRecord> {
        let frame = self.source.next_frame()?;
        let hybrid = emulate_detector(&frame, ModelChoice::Hybrid, &self.scenario)?;
        let odn = emulate_detector(&frame, ModelChoice::Odn, &self.scenario)?;
        let current = StepObservation {
            num_hybrid: hybrid.num_objects,
            num_odn: odn.num_objects,
            latency_hybrid: hybrid.latency,
            latency_odn: odn.latency,
        };
        let estimate = match self.scenario.estimates {
            EstimateSource::CurrentFrame => current,
            EstimateSource::PreviousFrame => self.prev_estimate,
        };
        let cfg = &self.controller;
        let state = PolicyState::new(
            self.q,
            self.prev_arrival,
            self.prev_service,
            service(ModelChoice::Hybrid, cfg),
            performance(
                ModelChoice::Hybrid,
                estimate.num_hybrid,
                estimate.num_odn,
                cfg,
            ),
            cfg,
        );
        let alpha = policy.decide(&state, &estimate, cfg, &mut self.policy_rng)?;
        let chosen: &Emulation = match alpha {
            ModelChoice::Hybrid => &hybrid,
            ModelChoice::Odn => &odn,
        };

        let cycle = self
            .scenario
            .fixed_arrival_latency
            .unwrap_or(chosen.latency);
        let a = arrival(cfg.w_fps, cycle)?;
        let b = service(alpha, cfg);
        let flops = policy.flops_per_decision();
        self.cumulative_flops += flops;
        let truth = frame.truth();
        let record = StepRecord {
            t: self.t,
            regime: frame.regime,
            alpha,
            q: self.q,
            a,
            b,
            performance: performance(alpha, hybrid.num_objects, odn.num_objects, cfg),
            latency: chosen.latency,
            metrics: score_against_truth(
                &chosen.detections,
                &truth,
                self.scenario.detector.match_iou,
            ),
            truth_count: truth.len(),
            num_hybrid: hybrid.num_objects,
            num_odn: odn.num_objects,
            flops,
            cumulative_flops: self.cumulative_flops,
            state,
        };

        self.q = queue_update(self.q, a, b)?;
        self.prev_arrival = a;
        self.prev_service = b;
        self.prev_estimate = current;
        self.t += 1;
        Ok(record)
    }

    /// Runs up to `horizon` steps (fewer if a replayed trace runs out).
    pub fn run(mut self, policy: &Policy, horizon: usize) -> Result<SimResult> {
        let steps = self
            .source
            .remaining()
            .map_or(horizon, |left| left.min(horizon));
        let mut records = Vec::with_capacity(steps);
        for _ in 0..steps {
            records.push(self.step(policy)?);
        }
        Ok(SimResult {
            policy: policy.kind(),
            records,
            final_q: self.q,
            overflow_cap: self.scenario.overflow_cap,
        })
    }
}

/// Generated-scene run of `policy` for `horizon` steps.
pub fn run(
    scenario: &ScenarioConfig,
    controller: &ControllerConfig,
    policy: &Policy,
    seed: u64,
    horizon: usize,
) -> Result<SimResult> {
    if horizon == 0 {
        return Ok(SimResult {
            policy: policy.kind(),
            records: Vec::new(),
            final_q: 0.0,
            overflow_cap: scenario.overflow_cap,
        });
    }
    Simulation::generated(scenario.clone(), *controller, seed)?.run(policy, horizon)
}

/// REINFORCE training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub episodes: usize,
    pub episode_horizon: usize,
    pub gamma: f64,
    pub lr: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            episode_horizon: 100,
            gamma: 0.99,
            lr: 2e-4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.episode_horizon == 0 {
            return Err(Error::Validation(
                "training needs at least one episode of one step".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub agent: ReinforceAgent,
    /// Total reward of each training episode.
    pub episode_rewards: Vec<f64>,
}

/// Fresh agent with the default 10-128-128-2 network, seeded initialization.
pub fn new_agent(training: &TrainingConfig, seed: u64) -> Result<ReinforceAgent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = MlpParams::init_uniform(DEFAULT_DIMS, &mut rng)?;
    Ok(ReinforceAgent::new(
        params,
        AdamConfig {
            lr: training.lr,
            ..AdamConfig::default()
        },
        training.gamma,
    ))
}

/// Trains a policy for `training.episodes` episodes; episode `e` replays scene seed `seed + e`.
pub fn train_reinforce(
    scenario: &ScenarioConfig,
    controller: &ControllerConfig,
    training: &TrainingConfig,
    seed: u64,
) -> Result<TrainingOutcome> {
    training.validate()?;
    let mut policy = Policy::Reinforce(Box::new(new_agent(training, seed)?));
    let mut episode_rewards = Vec::with_capacity(training.episodes);
    for episode in 0..training.episodes {
        let episode_seed = seed.wrapping_add(episode as u64);
        let result = run(
            scenario,
            controller,
            &policy,
            episode_seed,
            training.episode_horizon,
        )?;
        episode_rewards.push(result.total_reward(controller));
        let transitions = result.transitions(controller);
        if let Policy::Reinforce(agent) = &mut policy {
            agent.update(&transitions)?;
        }
    }
    let Policy::Reinforce(agent) = policy else {
        unreachable!("policy is constructed as Reinforce")
    };
    Ok(TrainingOutcome {
        agent: *agent,
        episode_rewards,
    })
}
