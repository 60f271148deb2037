//! Synthetic driving scenes: regimes, objects, flow maps and detector grids.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::scenario::{Regime, ScenarioConfig};
use crate::detection::{cell_box, BoundingBox, ConfidenceGrid, GridEntry};
use crate::error::Result;
use crate::flowmap::FlowMap;

/// A ground-truth object with its flow magnitude relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub bbox: BoundingBox,
    /// Zero for objects that appear static in the flow field.
    pub motion: f64,
}

impl SceneObject {
    pub fn is_moving(&self) -> bool {
        self.motion > 0.0
    }
}

/// Everything the two models could see in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub t: usize,
    pub regime: Regime,
    pub objects: Vec<SceneObject>,
    pub flow: FlowMap,
    pub grid: ConfidenceGrid,
}

impl FrameObservation {
    pub fn truth(&self) -> Vec<BoundingBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }
}

/// Seeded frame generator; the same seed always yields the same stream.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    config: ScenarioConfig,
    rng: ChaCha8Rng,
    regime: Regime,
    t: usize,
}

impl SceneGenerator {
    pub fn new(config: ScenarioConfig, seed: u64) -> Self {
        let regime = config.regime.initial;
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            regime,
            t: 0,
        }
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    fn advance_regime(&mut self) {
        let chain = &self.config.regime;
        let u: f64 = self.rng.random();
        self.regime = match self.regime {
            Regime::Driving if u < chain.p_stop => Regime::Stationary,
            Regime::Stationary if u < chain.p_start => Regime::Driving,
            r => r,
        };
    }

    fn sample_objects(&mut self) -> Vec<SceneObject> {
        let spec = self.config.objects;
        let mean = match self.regime {
            Regime::Driving => spec.mean_driving,
            Regime::Stationary => spec.mean_stationary,
        };
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map(|p| p.sample(&mut self.rng) as usize)
                .unwrap_or(0)
        } else {
            0
        };
        (0..count)
            .map(|_| {
                let w = self.rng.random_range(spec.size_min..=spec.size_max);
                let h = self.rng.random_range(spec.size_min..=spec.size_max);
                let cx = self.rng.random_range(w / 2.0..=1.0 - w / 2.0);
                let cy = self.rng.random_range(h / 2.0..=1.0 - h / 2.0);
                let moving_draw: f64 = self.rng.random();
                let speed = self.rng.random_range(spec.motion_min..=spec.motion_max);
                let moving = self.regime == Regime::Driving && moving_draw < spec.moving_fraction;
                SceneObject {
                    bbox: BoundingBox::new(cx, cy, w, h),
                    motion: if moving { speed } else { 0.0 },
                }
            })
            .collect()
    }

    fn render_flow(&mut self, objects: &[SceneObject]) -> Result<FlowMap> {
        let geo = self.config.frame;
        let det = self.config.detector;
        let base = match self.regime {
            Regime::Driving => det.ego_flow,
            Regime::Stationary => 0.0,
        };
        let noise =
            (det.flow_noise > 0.0).then(|| Normal::new(0.0, det.flow_noise).expect("finite sigma"));
        let rng = &mut self.rng;
        FlowMap::from_fn(geo.flow_rows, geo.flow_cols, |r, c| {
            let y = (r as f64 + 0.5) / geo.flow_rows as f64;
            let x = (c as f64 + 0.5) / geo.flow_cols as f64;
            let bump = objects
                .iter()
                .filter(|o| {
                    let (x0, y0, x1, y1) = o.bbox.corners();
                    x >= x0 && x <= x1 && y >= y0 && y <= y1
                })
                .map(|o| o.motion)
                .fold(0.0, f64::max);
            let n = noise.map_or(0.0, |d| d.sample(rng));
            base + bump + n
        })
    }

    fn render_grid(&mut self, objects: &[SceneObject]) -> Result<ConfidenceGrid> {
        let geo = self.config.frame;
        let det = self.config.detector;
        let mut entries = Vec::with_capacity(geo.grid_rows * geo.grid_cols * geo.boxes);
        for i in 0..geo.grid_rows {
            for j in 0..geo.grid_cols {
                let cell = cell_box(geo.grid_rows, geo.grid_cols, i, j);
                for _ in 0..geo.boxes {
                    let confidence = if det.background_confidence_max > 0.0 {
                        self.rng.random_range(0.0..det.background_confidence_max)
                    } else {
                        0.0
                    };
                    entries.push(GridEntry {
                        confidence,
                        bbox: cell,
                    });
                }
            }
        }
        let mut grid = ConfidenceGrid::new(geo.grid_rows, geo.grid_cols, geo.boxes, entries)?;

        // Recoverable misses score above every flow-lowered threshold (at most c_th / 2).
        let recover_min = 0.6 * det.c_th;
        for o in objects {
            let (i, j) = grid.cell_of(o.bbox.cx, o.bbox.cy);
            let k = self.rng.random_range(0..geo.boxes);
            let hit: f64 = self.rng.random();
            let recoverable: f64 = self.rng.random();
            let confidence = if hit >= det.miss_prob {
                self.rng
                    .random_range((det.c_th + 0.05).min(1.0)..=(det.c_th + 0.45).min(1.0))
            } else if o.is_moving() && recoverable < det.hybrid_gain {
                self.rng.random_range(recover_min..det.c_th)
            } else if det.background_confidence_max > 0.0 {
                self.rng.random_range(0.0..det.background_confidence_max)
            } else {
                0.0
            };
            let jitter = det.box_jitter;
            let dx = if jitter > 0.0 {
                self.rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            let dy = if jitter > 0.0 {
                self.rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            if confidence > grid.get(i, j, k).confidence {
                let bbox = BoundingBox::new(o.bbox.cx + dx, o.bbox.cy + dy, o.bbox.w, o.bbox.h);
                grid.set(i, j, k, GridEntry { confidence, bbox })?;
            }
        }
        Ok(grid)
    }

    /// Produces the next frame in the stream.
    pub fn next_frame(&mut self) -> Result<FrameObservation> {
        if self.t > 0 {
            self.advance_regime();
        }
        let objects = self.sample_objects();
        let flow = self.render_flow(&objects)?;
        let grid = self.render_grid(&objects)?;
        let frame = FrameObservation {
            t: self.t,
            regime: self.regime,
            objects,
            flow,
            grid,
        };
        self.t += 1;
        Ok(frame)
    }
}

/// Convenience wrapper: the `t`-th frame of the stream seeded with `seed`.
pub fn generate_frame(scenario: &ScenarioConfig, seed: u64, t: usize) -> Result<FrameObservation> {
    let mut generator = SceneGenerator::new(scenario.clone(), seed);
    let mut frame = generator.next_frame()?;
    for _ in 0..t {
        frame = generator.next_frame()?;
    }
    Ok(frame)
}
