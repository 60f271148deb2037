//! Flow-map processing: turns a dense motion-magnitude map into per-cell
//! confidence thresholds for the detector grid.
//!
//! The pipeline is
//!
//! ```text
//!   shift_min -> center_abs_median -> squash -> resize_bicubic -> vectorize_thresholds
//! ```
//!
//! After `squash` every value lies in `[0.5, 1)`, so each threshold ends up in
//! `[c_th / (1 + e^2), c_th / (1 + e)]`. Cells whose motion deviates strongly
//! from the median get the lowest thresholds.
//!
//! Flattening is row-major and the `K` replicas are stored block after block:
//! the threshold for grid cell `(i, j)` and box `k` sits at
//! `k * rows * cols + i * cols + j`.

mod bicubic;

pub use bicubic::{keys_kernel, resize_bicubic, KEYS_A};

use crate::error::{Error, Result};

/// An `M x N` matrix of per-pixel flow magnitudes, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FlowMap {
    /// Builds a map from row-major values. Rejects empty shapes, a length
    /// mismatch, and non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "flow map must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "flow map {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "flow map value at ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension(
                "flow map rows have unequal lengths".into(),
            ));
        }
        Self::new(n_rows, n_cols, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Magnitude field `sqrt(u^2 + v^2)` from interleaved-free `u` and `v` planes.
    pub fn from_uv(rows: usize, cols: usize, u: &[f32], v: &[f32]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Dimension("u and v planes differ in length".into()));
        }
        let values = u
            .iter()
            .zip(v)
            .map(|(&u, &v)| (u as f64).hypot(v as f64))
            .collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Median of all entries; for an even count, the mean of the two middle values.
    /// Linear time (selection, not a full sort).
    pub fn median(&self) -> f64 {
        let mut scratch = self.values.clone();
        let n = scratch.len();
        let mid = n / 2;
        let (lower, upper, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
        let upper = *upper;
        if n % 2 == 1 {
            upper
        } else {
            let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (below + upper) / 2.0
        }
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> FlowMap {
        FlowMap {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Subtracts the global minimum so the smallest entry becomes 0.
pub fn shift_min(map: &FlowMap) -> FlowMap {
    let min = map.min();
    map.map_values(|v| v - min)
}

/// Full `(x - min) / (max - min)` scaling. A constant map maps to all zeros.
pub fn min_max_scale(map: &FlowMap) -> FlowMap {
    let (min, max) = (map.min(), map.max());
    let range = max - min;
    if range == 0.0 {
        return map.map_values(|_| 0.0);
    }
    map.map_values(|v| (v - min) / range)
}

/// Absolute deviation from the median: static pixels go to 0, moving ones grow.
pub fn center_abs_median(map: &FlowMap) -> FlowMap {
    let median = map.median();
    map.map_values(|v| (v - median).abs())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic sigmoid.
pub fn squash(map: &FlowMap) -> FlowMap {
    map.map_values(sigmoid)
}

/// Per-cell, per-box confidence thresholds laid out as `K` row-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    rows: usize,
    cols: usize,
    boxes: usize,
    values: Vec<f64>,
}

impl ThresholdVector {
    /// Wraps raw values laid out as `boxes` row-major blocks of `rows x cols`.
    pub fn new(rows: usize, cols: usize, boxes: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || boxes == 0 {
            return Err(Error::Dimension(format!(
                "threshold vector needs positive dims, got {rows}x{cols}x{boxes}"
            )));
        }
        if values.len() != rows * cols * boxes {
            return Err(Error::Dimension(format!(
                "threshold vector {rows}x{cols}x{boxes} needs {} values, got {}",
                rows * cols * boxes,
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            boxes,
            values,
        })
    }

    /// The same threshold for every entry.
    pub fn uniform(rows: usize, cols: usize, boxes: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, boxes, vec![value; rows * cols * boxes])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.rows * self.cols + i * self.cols + j
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// The `k`-th replica block.
    pub fn block(&self, k: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub(crate) fn check_confidence_threshold(c_th: f64) -> Result<()> {
    if !(c_th > 0.0 && c_th <= 1.0) {
        return Err(Error::Validation(format!(
            "confidence threshold must lie in (0, 1], got {c_th}"
        )));
    }
    Ok(())
}

/// `c_th / (1 + exp(2 f))` for every squashed value, replicated `boxes` times.
pub fn vectorize_thresholds(map: &FlowMap, boxes: usize, c_th: f64) -> Result<ThresholdVector> {
    check_confidence_threshold(c_th)?;
    if boxes == 0 {
        return Err(Error::Validation("box count K must be at least 1".into()));
    }
    let block: Vec<f64> = map
        .values()
        .iter()
        .map(|&f| c_th / (1.0 + (2.0 * f).exp()))
        .collect();
    let mut values = Vec::with_capacity(block.len() * boxes);
    for _ in 0..boxes {
        values.extend_from_slice(&block);
    }
    ThresholdVector::new(map.rows(), map.cols(), boxes, values)
}

/// How the first stage rescales the raw map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Subtract the minimum only.
    #[default]
    ShiftMin,
    /// Subtract the minimum and divide by the range.
    MinMax,
}

/// Runs the full pipeline and returns thresholds for a `grid_rows x grid_cols x boxes` grid.
pub fn process(
    map: &FlowMap,
    grid_rows: usize,
    grid_cols: usize,
    boxes: usize,
    c_th: f64,
) -> Result<ThresholdVector> {
    process_with(
        map,
        grid_rows,
        grid_cols,
        boxes,
        c_th,
        Normalization::ShiftMin,
    )
}

pub fn process_with(
    map: &FlowMap,
    grid_rows: usize,
    grid_cols: usize,
    boxes: usize,
    c_th: f64,
    normalization: Normalization,
) -> Result<ThresholdVector> {
    check_confidence_threshold(c_th)?;
    if boxes == 0 {
        return Err(Error::Validation("box count K must be at least 1".into()));
    }
    let normalized = match normalization {
        Normalization::ShiftMin => shift_min(map),
        Normalization::MinMax => min_max_scale(map),
    };
    let squashed = squash(&center_abs_median(&normalized));
    let resized = resize_bicubic(&squashed, grid_rows, grid_cols)?;
    vectorize_thresholds(&resized, boxes, c_th)
}
