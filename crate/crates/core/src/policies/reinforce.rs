//! Monte-Carlo policy gradient with an Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{accumulate_log_prob_grad, mlp_forward, MlpParams};
use super::PolicyState;
use crate::controller::ModelChoice;
use crate::error::{Error, Result};

/// One `(state, action, reward)` step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: PolicyState,
    pub action: ModelChoice,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Descends along `grad` (the gradient of a loss to minimize).
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// What is subtracted from each return before weighting the log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Raw returns.
    None,
    /// Mean return of the episode.
    EpisodeMean,
    /// Running mean of the return at the same step index over earlier episodes.
    #[default]
    PerStep,
}

/// Running per-step mean of returns across episodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnTracker {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl ReturnTracker {
    /// Mean of earlier returns at step `t`, if any were seen.
    pub fn mean_at(&self, t: usize) -> Option<f64> {
        match (self.sums.get(t), self.counts.get(t)) {
            (Some(&s), Some(&n)) if n > 0 => Some(s / n as f64),
            _ => None,
        }
    }

    pub fn observe(&mut self, returns: &[f64]) {
        if self.sums.len() < returns.len() {
            self.sums.resize(returns.len(), 0.0);
            self.counts.resize(returns.len(), 0);
        }
        for (t, &g) in returns.iter().enumerate() {
            self.sums[t] += g;
            self.counts[t] += 1;
        }
    }
}

/// Advantages `G_t - baseline_t` for one episode. With [`Baseline::PerStep`],
/// steps without history get advantage 0.
pub fn advantages(returns: &[f64], baseline: Baseline, tracker: &ReturnTracker) -> Vec<f64> {
    match baseline {
        Baseline::None => returns.to_vec(),
        Baseline::EpisodeMean => {
            let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
            returns.iter().map(|g| g - mean).collect()
        }
        Baseline::PerStep => returns
            .iter()
            .enumerate()
            .map(|(t, g)| tracker.mean_at(t).map_or(0.0, |b| g - b))
            .collect(),
    }
}

/// Gradient of `(1/T) * sum_t G_t * log pi(a_t | s_t)` with respect to the parameters.
pub fn policy_gradient(
    params: &MlpParams,
    episode: &[Transition],
    gamma: f64,
) -> Result<MlpParams> {
    if episode.is_empty() {
        return Err(Error::Validation(
            "REINFORCE needs a non-empty episode".into(),
        ));
    }
    let rewards: Vec<f64> = episode.iter().map(|s| s.reward).collect();
    weighted_log_prob_grad(params, episode, &discounted_returns(&rewards, gamma))
}

/// Gradient of `(1/T) * sum_t w_t * log pi(a_t | s_t)`.
pub fn weighted_log_prob_grad(
    params: &MlpParams,
    episode: &[Transition],
    weights: &[f64],
) -> Result<MlpParams> {
    if episode.is_empty() || weights.len() != episode.len() {
        return Err(Error::Validation(
            "REINFORCE needs one weight per step of a non-empty episode".into(),
        ));
    }
    let norm = episode.len() as f64;
    let mut grad = MlpParams::zeros(params.dims())?;
    for (step, &g) in episode.iter().zip(weights) {
        if g == 0.0 {
            continue;
        }
        let fwd = mlp_forward(params, &step.state.features())?;
        accumulate_log_prob_grad(params, &fwd, step.action.index(), g / norm, &mut grad);
    }
    Ok(grad)
}

/// A policy network together with its optimizer state.
#[derive(Debug, Clone)]
pub struct ReinforceAgent {
    pub params: MlpParams,
    pub optimizer: Adam,
    pub gamma: f64,
    pub baseline: Baseline,
    pub returns: ReturnTracker,
}

impl ReinforceAgent {
    pub fn new(params: MlpParams, adam: AdamConfig, gamma: f64) -> Self {
        let optimizer = Adam::new(adam, params.len());
        Self {
            params,
            optimizer,
            gamma,
            baseline: Baseline::default(),
            returns: ReturnTracker::default(),
        }
    }

    /// Probability of choosing the Hybrid model in `state`.
    pub fn prob_hybrid(&self, state: &PolicyState) -> Result<f64> {
        Ok(mlp_forward(&self.params, &state.features())?.probs[0])
    }

    /// Samples an action from the policy distribution.
    pub fn sample<R: Rng + ?Sized>(&self, state: &PolicyState, rng: &mut R) -> Result<ModelChoice> {
        let p = self.prob_hybrid(state)?;
        Ok(if rng.random::<f64>() < p {
            ModelChoice::Hybrid
        } else {
            ModelChoice::Odn
        })
    }

    /// One gradient-ascent step on the episode's return-weighted log-likelihood.
    pub fn update(&mut self, episode: &[Transition]) -> Result<()> {
        if episode.is_empty() {
            return Err(Error::Validation(
                "REINFORCE needs a non-empty episode".into(),
            ));
        }
        let rewards: Vec<f64> = episode.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, self.gamma);
        let weights = advantages(&returns, self.baseline, &self.returns);
        self.returns.observe(&returns);
        let mut grad = weighted_log_prob_grad(&self.params, episode, &weights)?;
        // Ascent on the objective is descent on its negation.
        for g in grad.as_flat_mut() {
            *g = -*g;
        }
        self.optimizer
            .apply(self.params.as_flat_mut(), grad.as_flat());
        Ok(())
    }
}

/// Functional form: one step from fresh optimizer moments, weighting by raw returns.
pub fn reinforce_update(
    params: &MlpParams,
    episode: &[Transition],
    lr: f64,
    gamma: f64,
) -> Result<MlpParams> {
    let mut agent = ReinforceAgent::new(
        params.clone(),
        AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        gamma,
    );
    agent.baseline = Baseline::None;
    agent.update(episode)?;
    Ok(agent.params)
}
