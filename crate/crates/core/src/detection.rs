//! Grid thresholding, greedy non-maximum suppression and ground-truth accounting.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmap::ThresholdVector;

/// Axis-aligned box in normalized image coordinates, center form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w >= 0.0
            && self.h >= 0.0
    }
}

/// Intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One box slot of the detector output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub confidence: f64,
    pub bbox: BoundingBox,
}

/// `rows x cols x boxes` detector output; each entry holds a confidence and a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceGrid {
    rows: usize,
    cols: usize,
    boxes: usize,
    entries: Vec<GridEntry>,
}

impl ConfidenceGrid {
    /// Entries are ordered by cell (row-major) and then by box index.
    pub fn new(rows: usize, cols: usize, boxes: usize, entries: Vec<GridEntry>) -> Result<Self> {
        if rows == 0 || cols == 0 || boxes == 0 {
            return Err(Error::Dimension(format!(
                "confidence grid needs positive dims, got {rows}x{cols}x{boxes}"
            )));
        }
        if entries.len() != rows * cols * boxes {
            return Err(Error::Dimension(format!(
                "confidence grid {rows}x{cols}x{boxes} needs {} entries, got {}",
                rows * cols * boxes,
                entries.len()
            )));
        }
        for (n, e) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.confidence) {
                return Err(Error::Validation(format!(
                    "confidence {} at entry {n} is outside [0, 1]",
                    e.confidence
                )));
            }
            if !e.bbox.is_valid() {
                return Err(Error::Validation(format!(
                    "invalid box geometry at entry {n}"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            boxes,
            entries,
        })
    }

    /// All confidences zero; boxes centered on their cells with cell-sized extent.
    pub fn empty(rows: usize, cols: usize, boxes: usize) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols * boxes);
        for i in 0..rows {
            for j in 0..cols {
                let bbox = cell_box(rows, cols, i, j);
                entries.extend((0..boxes).map(|_| GridEntry {
                    confidence: 0.0,
                    bbox,
                }));
            }
        }
        Self::new(rows, cols, boxes, entries)
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

    pub fn entries(&self) -> &[GridEntry] {
        &self.entries
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.cols + j) * self.boxes + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &GridEntry {
        &self.entries[self.offset(i, j, k)]
    }

    /// Overwrites one entry. The confidence must lie in `[0, 1]`.
    pub fn set(&mut self, i: usize, j: usize, k: usize, entry: GridEntry) -> Result<()> {
        if !(0.0..=1.0).contains(&entry.confidence) || !entry.bbox.is_valid() {
            return Err(Error::Validation(format!(
                "invalid grid entry at ({i}, {j}, {k})"
            )));
        }
        let n = self.offset(i, j, k);
        self.entries[n] = entry;
        Ok(())
    }

    /// Grid cell containing the normalized point `(x, y)`.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((y * self.rows as f64).floor().max(0.0) as usize).min(self.rows - 1);
        let j = ((x * self.cols as f64).floor().max(0.0) as usize).min(self.cols - 1);
        (i, j)
    }
}

/// Box covering grid cell `(i, j)`.
pub fn cell_box(rows: usize, cols: usize, i: usize, j: usize) -> BoundingBox {
    let (w, h) = (1.0 / cols as f64, 1.0 / rows as f64);
    BoundingBox::new((j as f64 + 0.5) * w, (i as f64 + 0.5) * h, w, h)
}

/// A thresholded grid entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub row: usize,
    pub col: usize,
    pub box_index: usize,
    pub confidence: f64,
    pub bbox: BoundingBox,
    pub label: Option<u32>,
}

impl Detection {
    fn key(&self) -> (usize, usize, usize) {
        (self.row, self.col, self.box_index)
    }
}

/// Either one cut-off for the whole grid or one per entry.
#[derive(Debug, Clone, Copy)]
pub enum Thresholds<'a> {
    Scalar(f64),
    PerEntry(&'a ThresholdVector),
}

impl Thresholds<'_> {
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        match self {
            Thresholds::Scalar(t) => *t,
            Thresholds::PerEntry(v) => v.get(i, j, k),
        }
    }
}

/// Keeps entries whose confidence strictly exceeds their threshold, then the
/// highest-scoring admitted box per cell (ties go to the lower box index).
/// Output is row-major by cell.
pub fn threshold_detections(
    grid: &ConfidenceGrid,
    thresholds: Thresholds<'_>,
) -> Result<Vec<Detection>> {
    if let Thresholds::PerEntry(v) = thresholds {
        if (v.rows(), v.cols(), v.boxes()) != (grid.rows, grid.cols, grid.boxes) {
            return Err(Error::Validation(format!(
                "threshold vector is {}x{}x{} (len {}) but the grid is {}x{}x{} (len {})",
                v.rows(),
                v.cols(),
                v.boxes(),
                v.len(),
                grid.rows,
                grid.cols,
                grid.boxes,
                grid.entries.len()
            )));
        }
    }
    let mut out = Vec::new();
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let mut best: Option<(usize, &GridEntry)> = None;
            for k in 0..grid.boxes {
                let e = grid.get(i, j, k);
                if e.confidence > thresholds.at(i, j, k)
                    && best.is_none_or(|(_, b)| e.confidence > b.confidence)
                {
                    best = Some((k, e));
                }
            }
            if let Some((k, e)) = best {
                out.push(Detection {
                    row: i,
                    col: j,
                    box_index: k,
                    confidence: e.confidence,
                    bbox: e.bbox,
                    label: None,
                });
            }
        }
    }
    Ok(out)
}

/// Descending confidence, then ascending `(row, col, box)`.
fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.key().cmp(&b.key()))
}

/// Greedy non-maximum suppression. A detection is dropped when its IoU with an
/// already kept, higher-ranked detection is strictly above `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut ranked = dets.to_vec();
    ranked.sort_by(rank);
    let mut kept: Vec<Detection> = Vec::with_capacity(ranked.len());
    for d in ranked {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Detection accounting against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub total_detected: usize,
    pub correctly_detected: usize,
    pub falsely_detected: usize,
    pub overlapped_detected: usize,
    pub true_positive_rate: f64,
}

impl DetectionMetrics {
    pub fn from_counts(correct: usize, falsely: usize, overlapped: usize) -> Self {
        let total = correct + falsely + overlapped;
        let denom = total - overlapped;
        let tpr = if denom > 0 {
            correct as f64 / denom as f64
        } else {
            0.0
        };
        Self {
            total_detected: total,
            correctly_detected: correct,
            falsely_detected: falsely,
            overlapped_detected: overlapped,
            true_positive_rate: tpr,
        }
    }

    /// Fraction of truth boxes recovered.
    pub fn recall(&self, truth_count: usize) -> f64 {
        if truth_count == 0 {
            0.0
        } else {
            self.correctly_detected as f64 / truth_count as f64
        }
    }
}

/// Greedy one-to-one matching in descending confidence order.
///
/// Each detection takes the unmatched truth box with the highest IoU
/// (at least `match_iou`) and counts as correct. Failing that, a detection
/// that reaches `match_iou` against an already matched truth box counts as
/// overlapped; anything else is a false detection.
pub fn score_against_truth(
    dets: &[Detection],
    truth: &[BoundingBox],
    match_iou: f64,
) -> DetectionMetrics {
    let mut ranked = dets.to_vec();
    ranked.sort_by(rank);
    let mut matched = vec![false; truth.len()];
    let (mut correct, mut falsely, mut overlapped) = (0, 0, 0);
    for d in &ranked {
        let mut best_free: Option<(usize, f64)> = None;
        let mut hits_matched = false;
        for (n, t) in truth.iter().enumerate() {
            let overlap = iou(&d.bbox, t);
            if overlap < match_iou {
                continue;
            }
            if matched[n] {
                hits_matched = true;
            } else if best_free.is_none_or(|(_, o)| overlap > o) {
                best_free = Some((n, overlap));
            }
        }
        match best_free {
            Some((n, _)) => {
                matched[n] = true;
                correct += 1;
            }
            None if hits_matched => overlapped += 1,
            None => falsely += 1,
        }
    }
    DetectionMetrics::from_counts(correct, falsely, overlapped)
}
