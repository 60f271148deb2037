//! Discrete-time simulation of the detection pipeline under a model-selection policy.

mod emulate;
mod engine;
mod scenario;
mod scene;

pub use emulate::{emulate_detector, thresholded, Emulation};
pub use engine::{
    new_agent, run, summarize, train_reinforce, FrameSource, SimResult, Simulation, StepRecord,
    Summary, TrainingConfig, TrainingOutcome,
};
pub use scenario::{
    DetectorModel, EstimateSource, FrameGeometry, LatencyModel, LatencyProfile, ObjectProcess,
    Regime, RegimeChain, ScenarioConfig,
};
pub use scene::{generate_frame, FrameObservation, SceneGenerator, SceneObject};
