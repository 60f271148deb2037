use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::controller::ModelChoice;
use crate::error::{Error, Result};

/// Ego-vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Driving,
    Stationary,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Driving => "driving",
            Regime::Stationary => "stationary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "driving" => Some(Regime::Driving),
            "stationary" => Some(Regime::Stationary),
            _ => None,
        }
    }
}

/// Two-state Markov chain over regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeChain {
    pub initial: Regime,
    /// Per-step probability of stopping while driving.
    pub p_stop: f64,
    /// Per-step probability of starting while stationary.
    pub p_start: f64,
}

impl Default for RegimeChain {
    fn default() -> Self {
        Self {
            initial: Regime::Driving,
            p_stop: 0.01,
            p_start: 0.01,
        }
    }
}

impl RegimeChain {
    /// A chain that never leaves `regime`.
    pub fn fixed(regime: Regime) -> Self {
        Self {
            initial: regime,
            p_stop: 0.0,
            p_start: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectProcess {
    /// Poisson mean of objects per frame while driving.
    pub mean_driving: f64,
    /// Poisson mean of objects per frame while stationary.
    pub mean_stationary: f64,
    /// Fraction of objects with motion relative to the camera while driving.
    pub moving_fraction: f64,
    pub size_min: f64,
    pub size_max: f64,
    /// Flow magnitude range (pixels/frame) of moving objects.
    pub motion_min: f64,
    pub motion_max: f64,
}

impl Default for ObjectProcess {
    fn default() -> Self {
        Self {
            mean_driving: 1.0,
            mean_stationary: 0.5,
            moving_fraction: 0.8,
            size_min: 0.08,
            size_max: 0.2,
            motion_min: 2.0,
            motion_max: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyProfile {
    /// 133 ms Hybrid, 67 ms ODN.
    #[default]
    Cpu,
    /// 83 ms Hybrid, 55 ms ODN.
    Gpu,
}

impl LatencyProfile {
    pub fn base(self, choice: ModelChoice) -> f64 {
        match (self, choice) {
            (LatencyProfile::Cpu, ModelChoice::Hybrid) => 0.133,
            (LatencyProfile::Cpu, ModelChoice::Odn) => 0.067,
            (LatencyProfile::Gpu, ModelChoice::Hybrid) => 0.083,
            (LatencyProfile::Gpu, ModelChoice::Odn) => 0.055,
        }
    }
}

/// `p = base + per_object * detected_objects`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub profile: LatencyProfile,
    /// Overrides the profile's Hybrid base latency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_hybrid: Option<f64>,
    /// Overrides the profile's ODN base latency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_odn: Option<f64>,
    pub per_object_hybrid: f64,
    pub per_object_odn: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::profile(LatencyProfile::Cpu)
    }
}

impl LatencyModel {
    pub fn profile(profile: LatencyProfile) -> Self {
        Self {
            profile,
            base_hybrid: None,
            base_odn: None,
            per_object_hybrid: 0.001,
            per_object_odn: 0.001,
        }
    }

    pub fn base(&self, choice: ModelChoice) -> f64 {
        let custom = match choice {
            ModelChoice::Hybrid => self.base_hybrid,
            ModelChoice::Odn => self.base_odn,
        };
        custom.unwrap_or_else(|| self.profile.base(choice))
    }

    pub fn per_object(&self, choice: ModelChoice) -> f64 {
        match choice {
            ModelChoice::Hybrid => self.per_object_hybrid,
            ModelChoice::Odn => self.per_object_odn,
        }
    }

    pub fn latency(&self, choice: ModelChoice, objects: usize) -> f64 {
        self.base(choice) + self.per_object(choice) * objects as f64
    }
}

/// Sizes of the synthetic flow map and detector grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameGeometry {
    pub flow_rows: usize,
    pub flow_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub boxes: usize,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self {
            flow_rows: 32,
            flow_cols: 32,
            grid_rows: 13,
            grid_cols: 13,
            boxes: 3,
        }
    }
}

/// How detector outputs are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub c_th: f64,
    pub nms_iou: f64,
    pub match_iou: f64,
    /// Probability the detector scores a real object below `c_th`.
    pub miss_prob: f64,
    /// Probability a missed moving object still scores above the lowered
    /// flow-map threshold (and below `c_th`).
    pub hybrid_gain: f64,
    /// Upper bound of background (non-object) confidences.
    pub background_confidence_max: f64,
    /// Maximum center offset between a detection box and its object.
    pub box_jitter: f64,
    /// Uniform flow level added while driving.
    pub ego_flow: f64,
    /// Standard deviation of per-pixel flow noise.
    pub flow_noise: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            c_th: 0.5,
            nms_iou: 0.2,
            match_iou: 0.5,
            miss_prob: 0.3,
            hybrid_gain: 0.8,
            background_confidence_max: 0.05,
            box_jitter: 0.01,
            ego_flow: 1.5,
            flow_noise: 0.05,
        }
    }
}

/// Which per-model object counts the controller sees before deciding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    /// Both models' counts on the current frame.
    #[default]
    CurrentFrame,
    /// Both models' counts on the previous frame.
    PreviousFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub regime: RegimeChain,
    pub objects: ObjectProcess,
    pub latency: LatencyModel,
    pub frame: FrameGeometry,
    pub detector: DetectorModel,
    pub estimates: EstimateSource,
    /// When set, arrivals use this fixed cycle time instead of the chosen model's latency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_arrival_latency: Option<f64>,
    /// Backlog above which a run counts as overflowed.
    pub overflow_cap: f64,
    /// Replay frames from a trace CSV instead of generating them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            horizon: 3000,
            regime: RegimeChain::default(),
            objects: ObjectProcess::default(),
            latency: LatencyModel::default(),
            frame: FrameGeometry::default(),
            detector: DetectorModel::default(),
            estimates: EstimateSource::default(),
            fixed_arrival_latency: None,
            overflow_cap: 500.0,
            trace: None,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!(
            "{name} must be a probability, got {p}"
        )));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Validation(format!(
            "{name} must be finite and > 0, got {v}"
        )));
    }
    Ok(())
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Validation(format!(
            "{name} must be finite and >= 0, got {v}"
        )));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        probability("regime.p_stop", self.regime.p_stop)?;
        probability("regime.p_start", self.regime.p_start)?;

        let o = &self.objects;
        non_negative("objects.mean_driving", o.mean_driving)?;
        non_negative("objects.mean_stationary", o.mean_stationary)?;
        probability("objects.moving_fraction", o.moving_fraction)?;
        positive("objects.size_min", o.size_min)?;
        if !(o.size_max >= o.size_min && o.size_max <= 1.0) {
            return Err(Error::Validation(
                "objects.size_max must lie in [size_min, 1]".into(),
            ));
        }
        non_negative("objects.motion_min", o.motion_min)?;
        if !(o.motion_max >= o.motion_min && o.motion_max.is_finite()) {
            return Err(Error::Validation(
                "objects.motion_max must be >= motion_min".into(),
            ));
        }

        let l = &self.latency;
        for choice in ModelChoice::ALL {
            positive("latency base", l.base(choice))?;
            positive("latency per_object", l.per_object(choice))?;
        }

        let f = &self.frame;
        if [f.flow_rows, f.flow_cols, f.grid_rows, f.grid_cols, f.boxes].contains(&0) {
            return Err(Error::Validation(
                "frame dimensions must all be >= 1".into(),
            ));
        }

        let d = &self.detector;
        if !(d.c_th > 0.0 && d.c_th <= 1.0) {
            return Err(Error::Validation(format!(
                "detector.c_th must lie in (0, 1], got {}",
                d.c_th
            )));
        }
        probability("detector.nms_iou", d.nms_iou)?;
        if !(d.match_iou > 0.0 && d.match_iou <= 1.0) {
            return Err(Error::Validation(
                "detector.match_iou must lie in (0, 1]".into(),
            ));
        }
        probability("detector.miss_prob", d.miss_prob)?;
        probability("detector.hybrid_gain", d.hybrid_gain)?;
        if !(0.0..d.c_th).contains(&d.background_confidence_max) {
            return Err(Error::Validation(
                "detector.background_confidence_max must lie in [0, c_th)".into(),
            ));
        }
        non_negative("detector.box_jitter", d.box_jitter)?;
        non_negative("detector.ego_flow", d.ego_flow)?;
        non_negative("detector.flow_noise", d.flow_noise)?;

        if let Some(p) = self.fixed_arrival_latency {
            positive("fixed_arrival_latency", p)?;
        }
        positive("overflow_cap", self.overflow_cap)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn latency_profiles() {
        let gpu = LatencyModel::profile(LatencyProfile::Gpu);
        assert_eq!(gpu.latency(ModelChoice::Odn, 0), 0.055);
        assert_eq!(gpu.latency(ModelChoice::Hybrid, 0), 0.083);
        let cpu = LatencyModel::default();
        assert_eq!(cpu.base(ModelChoice::Hybrid), 0.133);
        assert!((cpu.latency(ModelChoice::Odn, 3) - 0.070).abs() < 1e-12);
        let custom = LatencyModel {
            base_odn: Some(0.2),
            ..cpu
        };
        assert_eq!(custom.base(ModelChoice::Odn), 0.2);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut s = ScenarioConfig::default();
        s.regime.p_stop = 1.5;
        assert!(s.validate().is_err());
        let s = ScenarioConfig {
            horizon: 0,
            ..ScenarioConfig::default()
        };
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.detector.background_confidence_max = 0.6;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.latency.per_object_odn = 0.0;
        assert!(s.validate().is_err());
    }
}
