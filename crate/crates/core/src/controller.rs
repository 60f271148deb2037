//! Queue-backlog dynamics and the drift-plus-penalty model selector.
//!
//! Each step the controller observes the backlog `Q` and, for every
//! candidate model, a service rate `b` and a performance value `P`. It picks
//!
//! ```text
//!   argmax_alpha  V * P(alpha) + Q * b(alpha)
//! ```
//!
//! With `Q = 0` this is the most accurate model; as `Q` grows the service
//! term dominates. The backlog then evolves as `Q' = max(Q + a - b, 0)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two selectable models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Detector with flow-map thresholds.
    Hybrid,
    /// Detector alone.
    Odn,
}

impl ModelChoice {
    pub const ALL: [ModelChoice; 2] = [ModelChoice::Hybrid, ModelChoice::Odn];

    /// Single-letter tag used in output files.
    pub fn tag(self) -> &'static str {
        match self {
            ModelChoice::Hybrid => "H",
            ModelChoice::Odn => "T",
        }
    }

    /// Action index used by the learned policy (0 = Hybrid, 1 = ODN).
    pub fn index(self) -> usize {
        match self {
            ModelChoice::Hybrid => 0,
            ModelChoice::Odn => 1,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            ModelChoice::Hybrid
        } else {
            ModelChoice::Odn
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "H" => Some(ModelChoice::Hybrid),
            "T" => Some(ModelChoice::Odn),
            _ => None,
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Which model wins an exact score tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Hybrid,
    Odn,
}

impl TieBreak {
    fn preferred(self) -> ModelChoice {
        match self {
            TieBreak::Hybrid => ModelChoice::Hybrid,
            TieBreak::Odn => ModelChoice::Odn,
        }
    }
}

/// Tradeoff coefficient and model weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Weight of the performance term.
    pub v: f64,
    /// Service per cycle when running the Hybrid model.
    pub w1: f64,
    /// Service per cycle when running the ODN alone.
    pub w2: f64,
    /// Nominal camera frame rate.
    pub w_fps: f64,
    /// Accuracy ratio of Hybrid over ODN.
    pub w_p: f64,
    pub tie_break: TieBreak,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v: 90.0,
            w1: 3.64,
            w2: 2.41,
            w_fps: 30.0,
            w_p: 1.005,
            tie_break: TieBreak::Hybrid,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::Validation(format!(
                "V must be finite and >= 0, got {}",
                self.v
            )));
        }
        for (name, value) in [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w_fps", self.w_fps),
            ("w_p", self.w_p),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// What the controller sees about the current frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepObservation {
    /// Objects the Hybrid model detects (or is estimated to detect).
    pub num_hybrid: usize,
    /// Objects the ODN detects.
    pub num_odn: usize,
    /// Seconds per cycle of the Hybrid model.
    pub latency_hybrid: f64,
    /// Seconds per cycle of the ODN.
    pub latency_odn: f64,
}

impl StepObservation {
    pub fn counts(num_hybrid: usize, num_odn: usize) -> Self {
        Self {
            num_hybrid,
            num_odn,
            ..Self::default()
        }
    }

    pub fn latency(&self, choice: ModelChoice) -> f64 {
        match choice {
            ModelChoice::Hybrid => self.latency_hybrid,
            ModelChoice::Odn => self.latency_odn,
        }
    }
}

fn check_non_negative(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(Error::Validation(format!(
            "{name} must be finite and >= 0, got {value}"
        )));
    }
    Ok(())
}

/// `max(Q + a - b, 0)`.
pub fn queue_update(q: f64, a: f64, b: f64) -> Result<f64> {
    check_non_negative("Q", q)?;
    check_non_negative("a", a)?;
    check_non_negative("b", b)?;
    Ok((q + a - b).max(0.0))
}

/// Frames that arrive during one processing cycle: `w_fps * p`.
pub fn arrival(w_fps: f64, p: f64) -> Result<f64> {
    if !(w_fps > 0.0 && w_fps.is_finite()) || !(p > 0.0 && p.is_finite()) {
        return Err(Error::Validation(format!(
            "arrival needs w_fps > 0 and p > 0, got w_fps={w_fps}, p={p}"
        )));
    }
    Ok(w_fps * p)
}

pub fn service(choice: ModelChoice, cfg: &ControllerConfig) -> f64 {
    match choice {
        ModelChoice::Hybrid => cfg.w1,
        ModelChoice::Odn => cfg.w2,
    }
}

pub fn performance(
    choice: ModelChoice,
    num_hybrid: usize,
    num_odn: usize,
    cfg: &ControllerConfig,
) -> f64 {
    match choice {
        ModelChoice::Hybrid => cfg.w_p * num_hybrid as f64,
        ModelChoice::Odn => num_odn as f64,
    }
}

/// `V * P(choice) + Q * b(choice)`.
pub fn dpp_score(
    choice: ModelChoice,
    q: f64,
    obs: &StepObservation,
    cfg: &ControllerConfig,
) -> f64 {
    cfg.v * performance(choice, obs.num_hybrid, obs.num_odn, cfg) + q * service(choice, cfg)
}

/// Drift-plus-penalty decision over `{Hybrid, Odn}`.
pub fn dpp_select(q: f64, obs: &StepObservation, cfg: &ControllerConfig) -> ModelChoice {
    let h = dpp_score(ModelChoice::Hybrid, q, obs, cfg);
    let t = dpp_score(ModelChoice::Odn, q, obs, cfg);
    if h > t {
        ModelChoice::Hybrid
    } else if t > h {
        ModelChoice::Odn
    } else {
        cfg.tie_break.preferred()
    }
}

/// Generalized rule over any number of actions given `(P, b)` per action.
/// Returns the index of the maximizing action; ties go to the lowest index.
/// Returns `None` for an empty action set.
pub fn dpp_argmax(v: f64, q: f64, actions: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (n, &(p, b)) in actions.iter().enumerate() {
        let score = v * p + q * b;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((n, score));
        }
    }
    best.map(|(n, _)| n)
}

/// Backlog `Q >= 0`, kept in fractional frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub q: f64,
    pub t: u64,
}

impl QueueState {
    pub fn advance(&mut self, a: f64, b: f64) -> Result<f64> {
        self.q = queue_update(self.q, a, b)?;
        self.t += 1;
        Ok(self.q)
    }
}

/// Online controller: owns the backlog and the latest samples.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    pub queue: QueueState,
    pub last_arrival: f64,
    pub last_service: f64,
    pub last_performance: f64,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            queue: QueueState::default(),
            last_arrival: 0.0,
            last_service: 0.0,
            last_performance: 0.0,
        })
    }

    pub fn decide(&self, obs: &StepObservation) -> ModelChoice {
        dpp_select(self.queue.q, obs, &self.config)
    }

    /// Books the outcome of running `choice` for one cycle and returns the new backlog.
    pub fn record(&mut self, choice: ModelChoice, obs: &StepObservation) -> Result<f64> {
        let a = arrival(self.config.w_fps, obs.latency(choice))?;
        let b = service(choice, &self.config);
        self.last_arrival = a;
        self.last_service = b;
        self.last_performance = performance(choice, obs.num_hybrid, obs.num_odn, &self.config);
        self.queue.advance(a, b)
    }
}

/// `Q^2 / 2`.
pub fn lyapunov(q: f64) -> f64 {
    0.5 * q * q
}

/// Per-step drift versus its upper bound `(a^2 + b^2)/2 + Q (a - b)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DriftReport {
    pub steps: usize,
    /// Smallest `bound - drift` seen (0 when the trajectory is empty).
    pub min_slack: f64,
    /// Largest `bound - drift` seen.
    pub max_slack: f64,
    /// Step indices where the drift exceeded the bound.
    pub violations: Vec<usize>,
}

impl DriftReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the one-step drift bound on each `(Q, a, b)` triple, where the
/// next backlog is `max(Q + a - b, 0)`. A relative tolerance of `1e-12`
/// absorbs rounding in the two sides.
pub fn drift_bound_check(trajectory: &[(f64, f64, f64)]) -> DriftReport {
    let mut report = DriftReport {
        steps: trajectory.len(),
        min_slack: if trajectory.is_empty() {
            0.0
        } else {
            f64::INFINITY
        },
        ..DriftReport::default()
    };
    for (n, &(q, a, b)) in trajectory.iter().enumerate() {
        let next = (q + a - b).max(0.0);
        let drift = lyapunov(next) - lyapunov(q);
        let bound = 0.5 * (a * a + b * b) + q * (a - b);
        let slack = bound - drift;
        report.min_slack = report.min_slack.min(slack);
        report.max_slack = report.max_slack.max(slack);
        let scale = drift.abs().max(bound.abs()).max(1.0);
        if slack < -1e-12 * scale {
            report.violations.push(n);
        }
    }
    report
}

/// How floating-point operations are tallied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FlopConvention {
    /// Every multiply, add and compare in the selection loop costs one:
    /// per action `V * P`, `Q * b`, the add, and the compare against the
    /// running best.
    #[default]
    PerOperation,
    /// Only the score arithmetic (`V * P`, `Q * b`, one add) and the
    /// `n - 1` compares between scores.
    Minimal,
}

/// FLOPs for one selection over `actions` candidates.
pub fn dpp_flops_for(actions: u64, convention: FlopConvention) -> u64 {
    match convention {
        FlopConvention::PerOperation => 4 * actions,
        FlopConvention::Minimal => 3 * actions + actions.saturating_sub(1),
    }
}

/// FLOPs for one two-way selection under [`FlopConvention::PerOperation`].
pub fn dpp_flops() -> u64 {
    dpp_flops_for(ModelChoice::ALL.len() as u64, FlopConvention::PerOperation)
}

/// Reference per-selection count, for comparison with [`dpp_flops`].
pub const REFERENCE_DPP_FLOPS: u64 = 12;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn queue_update_examples() {
        assert_eq!(queue_update(0.0, 2.49, 3.64).unwrap(), 0.0);
        assert!(close(queue_update(10.0, 3.99, 3.64).unwrap(), 10.35));
        assert!(close(queue_update(10.0, 2.01, 2.41).unwrap(), 9.60));
    }

    #[test]
    fn queue_update_rejects_negative() {
        assert!(queue_update(-1.0, 0.0, 0.0).is_err());
        assert!(queue_update(0.0, -1.0, 0.0).is_err());
        assert!(queue_update(0.0, 0.0, -1.0).is_err());
        assert!(queue_update(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn arrival_examples() {
        assert!(close(arrival(30.0, 0.055).unwrap(), 1.65));
        assert!(close(arrival(30.0, 0.133).unwrap(), 3.99));
        assert_eq!(arrival(1.0, 1.0).unwrap(), 1.0);
        assert!(arrival(0.0, 1.0).is_err());
        assert!(arrival(30.0, 0.0).is_err());
    }

    #[test]
    fn service_and_performance() {
        let cfg = ControllerConfig::default();
        assert_eq!(service(ModelChoice::Hybrid, &cfg), 3.64);
        assert_eq!(service(ModelChoice::Odn, &cfg), 2.41);
        let flat = ControllerConfig {
            w1: 1.0,
            w2: 1.0,
            ..cfg
        };
        assert_eq!(service(ModelChoice::Hybrid, &flat), 1.0);

        assert!(close(performance(ModelChoice::Hybrid, 3, 2, &cfg), 3.015));
        assert_eq!(performance(ModelChoice::Odn, 3, 2, &cfg), 2.0);
        assert_eq!(performance(ModelChoice::Hybrid, 0, 0, &cfg), 0.0);
    }

    #[test]
    fn score_and_select_examples() {
        let cfg = ControllerConfig::default();
        let obs = StepObservation::counts(3, 2);
        assert!(close(
            dpp_score(ModelChoice::Hybrid, 0.0, &obs, &cfg),
            271.35
        ));
        assert!(close(dpp_score(ModelChoice::Odn, 0.0, &obs, &cfg), 180.0));
        assert_eq!(dpp_select(0.0, &obs, &cfg), ModelChoice::Hybrid);

        let obs = StepObservation::counts(4, 5);
        assert!(close(dpp_score(ModelChoice::Odn, 10.0, &obs, &cfg), 474.1));
        assert!(close(
            dpp_score(ModelChoice::Hybrid, 10.0, &obs, &cfg),
            398.2
        ));
        assert_eq!(dpp_select(10.0, &obs, &cfg), ModelChoice::Odn);
    }

    #[test]
    fn ties_follow_configuration() {
        let cfg = ControllerConfig {
            w1: 2.0,
            w2: 2.0,
            ..ControllerConfig::default()
        };
        let obs = StepObservation::counts(0, 0);
        for q in [0.0, 1.0, 123.0] {
            assert_eq!(dpp_select(q, &obs, &cfg), ModelChoice::Hybrid);
            let odn_first = ControllerConfig {
                tie_break: TieBreak::Odn,
                ..cfg
            };
            assert_eq!(dpp_select(q, &obs, &odn_first), ModelChoice::Odn);
        }
    }

    #[test]
    fn argmax_general() {
        assert_eq!(dpp_argmax(1.0, 0.0, &[]), None);
        assert_eq!(dpp_argmax(1.0, 0.0, &[(1.0, 5.0), (2.0, 0.0)]), Some(1));
        assert_eq!(dpp_argmax(1.0, 10.0, &[(1.0, 5.0), (2.0, 0.0)]), Some(0));
        assert_eq!(dpp_argmax(1.0, 0.0, &[(2.0, 0.0), (2.0, 0.0)]), Some(0));
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov(0.0), 0.0);
        assert_eq!(lyapunov(2.0), 2.0);
        assert_eq!(lyapunov(3.5), 6.125);
    }

    #[test]
    fn drift_bound_examples() {
        let r = drift_bound_check(&[]);
        assert!(r.is_clean());
        assert_eq!(r.steps, 0);

        let r = drift_bound_check(&[(0.0, 1.0, 0.0)]);
        assert!(r.is_clean());
        assert_eq!(r.max_slack, 0.0);

        let r = drift_bound_check(&[(0.0, 0.0, 1.0)]);
        assert!(r.is_clean());
        assert_eq!(r.max_slack, 0.5);
    }

    #[test]
    fn flop_counts() {
        assert_eq!(dpp_flops(), 8);
        assert!(dpp_flops() <= 20);
        assert_eq!(dpp_flops_for(2, FlopConvention::Minimal), 7);
        for n in 1..10 {
            assert_eq!(
                dpp_flops_for(n + 1, FlopConvention::PerOperation)
                    - dpp_flops_for(n, FlopConvention::PerOperation),
                4
            );
        }
    }

    #[test]
    fn controller_tracks_backlog() {
        let mut c = Controller::new(ControllerConfig::default()).unwrap();
        let obs = StepObservation {
            num_hybrid: 0,
            num_odn: 0,
            latency_hybrid: 0.133,
            latency_odn: 0.067,
        };
        let q = c.record(ModelChoice::Hybrid, &obs).unwrap();
        assert!(close(q, 0.35));
        assert!(close(c.last_arrival, 3.99));
        assert_eq!(c.queue.t, 1);
        let q = c.record(ModelChoice::Odn, &obs).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig {
            w1: 0.0,
            ..ControllerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControllerConfig {
            v: -1.0,
            ..ControllerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
