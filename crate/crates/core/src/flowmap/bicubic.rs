//! Separable bicubic resampling with the Keys kernel.
//!
//! Sample positions use the corner-aligned mapping `src = dst * (S - 1) / (D - 1)`,
//! so the first and last samples land exactly on the source borders and an
//! equal-size resize is the identity. Taps outside the source are clamped to
//! the nearest edge sample.

use super::FlowMap;
use crate::error::{Error, Result};

/// Keys cubic convolution constant.
pub const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn keys_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn source_position(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len == 1 {
        (src_len - 1) as f64 / 2.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

fn taps(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|d| {
            let pos = source_position(d, src_len, dst_len);
            let base = pos.floor();
            let frac = pos - base;
            let base = base as isize;
            let mut index = [0usize; 4];
            let mut weight = [0.0; 4];
            for (n, offset) in (-1isize..=2).enumerate() {
                index[n] = (base + offset).clamp(0, last) as usize;
                weight[n] = keys_kernel(frac - offset as f64, KEYS_A);
            }
            Taps { index, weight }
        })
        .collect()
}

/// Resizes `map` to `rows x cols` with bicubic interpolation (a = -0.5, clamp-to-edge).
/// Results are clipped to the source's value range, removing the kernel's
/// overshoot next to steps.
pub fn resize_bicubic(map: &FlowMap, rows: usize, cols: usize) -> Result<FlowMap> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "resize target must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if rows == map.rows() && cols == map.cols() {
        return Ok(map.clone());
    }

    let (src_rows, src_cols) = (map.rows(), map.cols());
    let src = map.values();

    // Horizontal pass: src_rows x cols.
    let col_taps = taps(src_cols, cols);
    let mut horizontal = Vec::with_capacity(src_rows * cols);
    for r in 0..src_rows {
        let row = &src[r * src_cols..(r + 1) * src_cols];
        horizontal.extend(col_taps.iter().map(|t| {
            t.index
                .iter()
                .zip(t.weight.iter())
                .map(|(&i, &w)| row[i] * w)
                .sum::<f64>()
        }));
    }

    let (lo, hi) = (map.min(), map.max());
    // Vertical pass: rows x cols.
    let row_taps = taps(src_rows, rows);
    let mut out = Vec::with_capacity(rows * cols);
    for t in &row_taps {
        for c in 0..cols {
            let v = t
                .index
                .iter()
                .zip(t.weight.iter())
                .map(|(&r, &w)| horizontal[r * cols + c] * w)
                .sum::<f64>();
            out.push(v.clamp(lo, hi));
        }
    }
    FlowMap::new(rows, cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_interpolates_integer_nodes() {
        assert_eq!(keys_kernel(0.0, KEYS_A), 1.0);
        assert_eq!(keys_kernel(1.0, KEYS_A), 0.0);
        assert_eq!(keys_kernel(-1.0, KEYS_A), 0.0);
        assert_eq!(keys_kernel(2.0, KEYS_A), 0.0);
    }

    #[test]
    fn step_edges_do_not_overshoot() {
        let step = FlowMap::from_fn(1, 8, |_, j| if j < 4 { 0.0 } else { 1.0 }).unwrap();
        let out = resize_bicubic(&step, 1, 13).unwrap();
        assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.values()[0], 0.0);
        assert_eq!(out.values()[12], 1.0);
    }

    #[test]
    fn kernel_weights_partition_unity() {
        for step in 0..=20 {
            let frac = step as f64 / 20.0;
            let sum: f64 = (-1..=2).map(|o| keys_kernel(frac - o as f64, KEYS_A)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "frac {frac}: {sum}");
        }
    }

    #[test]
    fn zero_target_is_rejected() {
        let map = FlowMap::constant(2, 2, 1.0).unwrap();
        assert!(matches!(
            resize_bicubic(&map, 0, 3),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            resize_bicubic(&map, 3, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn identity_resize() {
        let map = FlowMap::from_fn(4, 4, |i, j| (i * 7 + j * 3) as f64 * 0.37 - 1.0).unwrap();
        assert_eq!(resize_bicubic(&map, 4, 4).unwrap(), map);
    }

    #[test]
    fn constant_map_stays_constant() {
        let map = FlowMap::constant(9, 5, 0.7).unwrap();
        for (r, c) in [(1, 1), (3, 7), (13, 13), (20, 2)] {
            let out = resize_bicubic(&map, r, c).unwrap();
            assert_eq!((out.rows(), out.cols()), (r, c));
            assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-9));
        }
    }

    #[test]
    fn linear_ramp_is_reproduced_at_sample_points() {
        // Closed-form oracle: the ramp evaluated at the corner-aligned source position.
        let ramp = |y: f64, x: f64| 0.25 * y + 1.5 * x - 2.0;
        let map = FlowMap::from_fn(8, 8, |i, j| ramp(i as f64, j as f64)).unwrap();
        let out = resize_bicubic(&map, 4, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = ramp(i as f64 * 7.0 / 3.0, j as f64 * 7.0 / 3.0);
                assert!((out.get(i, j) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_cell_target_samples_center() {
        let map = FlowMap::from_rows(vec![vec![0.0, 2.0, 4.0]]).unwrap();
        let out = resize_bicubic(&map, 1, 1).unwrap();
        assert!((out.get(0, 0) - 2.0).abs() < 1e-12);
    }
}
