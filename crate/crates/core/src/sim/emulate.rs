use super::scenario::ScenarioConfig;
use super::scene::FrameObservation;
use crate::controller::ModelChoice;
use crate::detection::{nms, threshold_detections, Detection, Thresholds};
use crate::error::Result;
use crate::flowmap;

/// What one model produces on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Emulation {
    pub choice: ModelChoice,
    /// Thresholded detections before suppression.
    pub raw: Vec<Detection>,
    /// Final detections after NMS.
    pub detections: Vec<Detection>,
    pub num_objects: usize,
    /// Seconds per cycle.
    pub latency: f64,
}

/// Pre-NMS detections of `choice` on `frame`.
pub fn thresholded(
    frame: &FrameObservation,
    choice: ModelChoice,
    scenario: &ScenarioConfig,
) -> Result<Vec<Detection>> {
    let c_th = scenario.detector.c_th;
    match choice {
        ModelChoice::Odn => threshold_detections(&frame.grid, Thresholds::Scalar(c_th)),
        ModelChoice::Hybrid => {
            let grid = &frame.grid;
            let thresholds =
                flowmap::process(&frame.flow, grid.rows(), grid.cols(), grid.boxes(), c_th)?;
            threshold_detections(grid, Thresholds::PerEntry(&thresholds))
        }
    }
}

/// Runs the emulated detector: ODN thresholds at `c_th`; Hybrid thresholds
/// with the flow-map vector. Both are followed by NMS.
pub fn emulate_detector(
    frame: &FrameObservation,
    choice: ModelChoice,
    scenario: &ScenarioConfig,
) -> Result<Emulation> {
    let raw = thresholded(frame, choice, scenario)?;
    let detections = nms(&raw, scenario.detector.nms_iou);
    let num_objects = detections.len();
    Ok(Emulation {
        choice,
        raw,
        detections,
        num_objects,
        latency: scenario.latency.latency(choice, num_objects),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{BoundingBox, ConfidenceGrid, GridEntry};
    use crate::flowmap::FlowMap;
    use crate::sim::scenario::{LatencyModel, LatencyProfile, Regime};
    use crate::sim::scene::SceneObject;

    fn frame(flow: FlowMap, grid: ConfidenceGrid, objects: Vec<SceneObject>) -> FrameObservation {
        FrameObservation {
            t: 0,
            regime: Regime::Driving,
            objects,
            flow,
            grid,
        }
    }

    #[test]
    fn flat_flow_admits_superset() {
        let s = ScenarioConfig::default();
        let mut grid = ConfidenceGrid::empty(4, 4, 2).unwrap();
        let b = BoundingBox::new(0.1, 0.1, 0.1, 0.1);
        grid.set(
            0,
            0,
            0,
            GridEntry {
                confidence: 0.7,
                bbox: b,
            },
        )
        .unwrap();
        grid.set(
            2,
            3,
            1,
            GridEntry {
                confidence: 0.2,
                bbox: b,
            },
        )
        .unwrap();
        let f = frame(FlowMap::constant(8, 8, 1.0).unwrap(), grid, vec![]);
        let t = thresholded(&f, ModelChoice::Odn, &s).unwrap();
        let h = thresholded(&f, ModelChoice::Hybrid, &s).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(h.len(), 2);
        assert!(t.iter().all(|d| h.contains(d)));
    }

    #[test]
    fn low_confidence_moving_object_needs_flow() {
        let s = ScenarioConfig::default();
        let bbox = BoundingBox::new(0.5, 0.5, 0.25, 0.25);
        let mut grid = ConfidenceGrid::empty(4, 4, 1).unwrap();
        grid.set(
            2,
            2,
            0,
            GridEntry {
                confidence: 0.3,
                bbox,
            },
        )
        .unwrap();
        let flow = FlowMap::from_fn(16, 16, |r, c| {
            if (6..10).contains(&r) && (6..10).contains(&c) {
                5.0
            } else {
                0.0
            }
        })
        .unwrap();
        let f = frame(flow, grid, vec![SceneObject { bbox, motion: 5.0 }]);
        let t = emulate_detector(&f, ModelChoice::Odn, &s).unwrap();
        let h = emulate_detector(&f, ModelChoice::Hybrid, &s).unwrap();
        assert_eq!(t.num_objects, 0);
        assert_eq!(h.num_objects, 1);
    }

    #[test]
    fn gpu_latency_with_no_objects() {
        let s = ScenarioConfig {
            latency: LatencyModel::profile(LatencyProfile::Gpu),
            ..ScenarioConfig::default()
        };
        let f = frame(
            FlowMap::constant(4, 4, 0.0).unwrap(),
            ConfidenceGrid::empty(2, 2, 1).unwrap(),
            vec![],
        );
        assert_eq!(
            emulate_detector(&f, ModelChoice::Odn, &s).unwrap().latency,
            0.055
        );
        assert_eq!(
            emulate_detector(&f, ModelChoice::Hybrid, &s)
                .unwrap()
                .latency,
            0.083
        );
    }
}
