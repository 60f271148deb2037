//! Flow-map driven confidence thresholds and queue-stable model selection
//! for real-time object detection.
//!
//! - [`flowmap`] turns a dense flow-magnitude map into per-cell thresholds.
//! - [`detection`] applies thresholds to a detector grid, runs NMS and scores detections.
//! - [`controller`] holds the queue law and the drift-plus-penalty selector.
//! - [`policies`] wraps the selector, two static baselines and a REINFORCE policy.
//! - [`sim`] drives everything over synthetic or replayed scenes.
//! - [`io`] and [`config`] cover file formats and run configuration.

pub mod config;
pub mod controller;
pub mod detection;
pub mod error;
pub mod flowmap;
pub mod io;
pub mod policies;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
