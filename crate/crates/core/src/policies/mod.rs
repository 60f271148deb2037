//! Decision policies compared in the experiments: the drift-plus-penalty
//! controller, two static baselines and a learned REINFORCE policy.

pub mod mlp;
pub mod reinforce;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{dpp_flops, dpp_select, ControllerConfig, ModelChoice, StepObservation};
use crate::error::{Error, Result};

pub use mlp::{mlp_forward, reinforce_flops, Forward, MlpParams, REFERENCE_REINFORCE_FLOPS};
pub use reinforce::{
    discounted_returns, policy_gradient, reinforce_update, AdamConfig, Baseline, ReinforceAgent,
    Transition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Dpp,
    /// Comp1.
    AlwaysOdn,
    /// Comp2.
    AlwaysHybrid,
    /// Comp3.
    Reinforce,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Dpp,
        PolicyKind::AlwaysOdn,
        PolicyKind::AlwaysHybrid,
        PolicyKind::Reinforce,
    ];

    /// Label used in comparison tables and plot files.
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Dpp => "DPP",
            PolicyKind::AlwaysOdn => "Comp1",
            PolicyKind::AlwaysHybrid => "Comp2",
            PolicyKind::Reinforce => "Comp3",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dpp => "dpp",
            PolicyKind::AlwaysOdn => "always-odn",
            PolicyKind::AlwaysHybrid => "always-hybrid",
            PolicyKind::Reinforce => "reinforce",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown policy {s:?}")))
    }
}

/// Input vector of the learned policy, in this order:
///
/// | slot | value |
/// |------|-------|
/// | 0 | backlog `Q[t]` |
/// | 1 | previous arrival `a[t-1]` |
/// | 2 | previous service `b(alpha[t-1])` |
/// | 3 | candidate service `b(H)` for the current step |
/// | 4 | candidate performance `P(H)` for the current step |
/// | 5..=9 | `w1, w2, w_fps, w_p, V` |
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState([f64; mlp::STATE_DIM]);

impl PolicyState {
    pub fn new(
        q: f64,
        prev_arrival: f64,
        prev_service: f64,
        service: f64,
        performance: f64,
        cfg: &ControllerConfig,
    ) -> Self {
        Self([
            q,
            prev_arrival,
            prev_service,
            service,
            performance,
            cfg.w1,
            cfg.w2,
            cfg.w_fps,
            cfg.w_p,
            cfg.v,
        ])
    }

    pub fn from_array(values: [f64; mlp::STATE_DIM]) -> Self {
        Self(values)
    }

    pub fn q(&self) -> f64 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Network input: each slot divided by a fixed reference scale.
    pub fn features(&self) -> [f64; mlp::STATE_DIM] {
        let mut out = self.0;
        for (x, s) in out.iter_mut().zip(FEATURE_SCALE) {
            *x /= s;
        }
        out
    }
}

/// Reference magnitudes used by [`PolicyState::features`].
pub const FEATURE_SCALE: [f64; mlp::STATE_DIM] =
    [100.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 100.0, 1.0, 100.0];

/// A ready-to-run policy.
#[derive(Debug, Clone)]
pub enum Policy {
    Dpp,
    AlwaysOdn,
    AlwaysHybrid,
    Reinforce(Box<ReinforceAgent>),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Dpp => PolicyKind::Dpp,
            Policy::AlwaysOdn => PolicyKind::AlwaysOdn,
            Policy::AlwaysHybrid => PolicyKind::AlwaysHybrid,
            Policy::Reinforce(_) => PolicyKind::Reinforce,
        }
    }

    /// Static and DPP policies; the learned one needs an agent.
    pub fn fixed(kind: PolicyKind) -> Option<Self> {
        match kind {
            PolicyKind::Dpp => Some(Policy::Dpp),
            PolicyKind::AlwaysOdn => Some(Policy::AlwaysOdn),
            PolicyKind::AlwaysHybrid => Some(Policy::AlwaysHybrid),
            PolicyKind::Reinforce => None,
        }
    }

    /// FLOPs one decision costs.
    pub fn flops_per_decision(&self) -> u64 {
        match self {
            Policy::Dpp => dpp_flops(),
            Policy::AlwaysOdn | Policy::AlwaysHybrid => 0,
            Policy::Reinforce(agent) => reinforce_flops(&agent.params),
        }
    }

    pub fn decide<R: Rng + ?Sized>(
        &self,
        state: &PolicyState,
        obs: &StepObservation,
        cfg: &ControllerConfig,
        rng: &mut R,
    ) -> Result<ModelChoice> {
        policy_decide(self, state, obs, cfg, rng)
    }
}

pub fn policy_decide<R: Rng + ?Sized>(
    policy: &Policy,
    state: &PolicyState,
    obs: &StepObservation,
    cfg: &ControllerConfig,
    rng: &mut R,
) -> Result<ModelChoice> {
    Ok(match policy {
        Policy::AlwaysOdn => ModelChoice::Odn,
        Policy::AlwaysHybrid => ModelChoice::Hybrid,
        Policy::Dpp => dpp_select(state.q(), obs, cfg),
        Policy::Reinforce(agent) => agent.sample(state, rng)?,
    })
}
