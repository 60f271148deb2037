use std::f64::consts::E;

use proptest::prelude::*;

use flowgate::controller::{
    dpp_argmax, dpp_score, dpp_select, drift_bound_check, queue_update, ControllerConfig,
    ModelChoice, StepObservation,
};
use flowgate::detection::{
    iou, nms, score_against_truth, threshold_detections, BoundingBox, ConfidenceGrid, Detection,
    GridEntry, Thresholds,
};
use flowgate::flowmap::{
    center_abs_median, process, shift_min, squash, vectorize_thresholds, FlowMap, ThresholdVector,
};

fn flow_map() -> impl Strategy<Value = FlowMap> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
        prop::collection::vec(-100.0f64..100.0, r * c)
            .prop_map(move |v| FlowMap::new(r, c, v).unwrap())
    })
}

/// Multiples of 1/8 in a small range: every shift and subtraction stays exact.
fn dyadic_map() -> impl Strategy<Value = FlowMap> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
        prop::collection::vec(-512i32..512, r * c).prop_map(move |v| {
            FlowMap::new(r, c, v.into_iter().map(|x| x as f64 / 8.0).collect()).unwrap()
        })
    })
}

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (0.0f64..1.0, 0.0f64..1.0, 0.01f64..0.5, 0.01f64..0.5)
        .prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h))
}

/// Detections with distinct `(row, col, box)` keys.
fn detections(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((bbox(), 0.0f64..1.0), 0..=max).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(n, (bbox, confidence))| Detection {
                row: n / 3,
                col: n % 3,
                box_index: 0,
                confidence,
                bbox,
                label: None,
            })
            .collect()
    })
}

fn grid() -> impl Strategy<Value = ConfidenceGrid> {
    (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(r, c, k)| {
        prop::collection::vec((0.0f64..1.0, bbox()), r * c * k).prop_map(move |es| {
            let entries = es
                .into_iter()
                .map(|(confidence, bbox)| GridEntry { confidence, bbox })
                .collect();
            ConfidenceGrid::new(r, c, k, entries).unwrap()
        })
    })
}

fn controller_config() -> impl Strategy<Value = ControllerConfig> {
    (
        0.1f64..200.0,
        0.1f64..10.0,
        0.1f64..10.0,
        1.0f64..60.0,
        0.5f64..2.0,
    )
        .prop_map(|(v, w1, w2, w_fps, w_p)| ControllerConfig {
            v,
            w1,
            w2,
            w_fps,
            w_p,
            ..ControllerConfig::default()
        })
}

fn observation() -> impl Strategy<Value = StepObservation> {
    (0usize..20, 0usize..20).prop_map(|(h, t)| StepObservation::counts(h, t))
}

fn ranked(dets: &[Detection]) -> Vec<Detection> {
    let mut v = dets.to_vec();
    v.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then((a.row, a.col, a.box_index).cmp(&(b.row, b.col, b.box_index)))
    });
    v
}

/// Enumerates every subset and returns those consistent with greedy suppression:
/// a box is kept exactly when no kept, higher-ranked box overlaps it above `thr`.
fn nms_fixed_points(dets: &[Detection], thr: f64) -> Vec<Vec<Detection>> {
    let order = ranked(dets);
    let n = order.len();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let kept = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..n).all(|i| {
            let free = (0..i)
                .filter(|&j| kept(j))
                .all(|j| iou(&order[j].bbox, &order[i].bbox) <= thr);
            kept(i) == free
        });
        if consistent {
            out.push((0..n).filter(|&i| kept(i)).map(|i| order[i]).collect());
        }
    }
    out
}

/// Straight-line restatement of the greedy truth matcher.
fn reference_counts(
    dets: &[Detection],
    truth: &[BoundingBox],
    match_iou: f64,
) -> (usize, usize, usize) {
    let mut taken = vec![false; truth.len()];
    let (mut c, mut f, mut o) = (0, 0, 0);
    for d in ranked(dets) {
        let ious: Vec<f64> = truth.iter().map(|t| iou(&d.bbox, t)).collect();
        let best_free = (0..truth.len())
            .filter(|&n| !taken[n] && ious[n] >= match_iou)
            .fold(None, |best: Option<usize>, n| match best {
                Some(b) if ious[b] >= ious[n] => Some(b),
                _ => Some(n),
            });
        if let Some(n) = best_free {
            taken[n] = true;
            c += 1;
        } else if (0..truth.len()).any(|n| taken[n] && ious[n] >= match_iou) {
            o += 1;
        } else {
            f += 1;
        }
    }
    (c, f, o)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pipeline_stage_ranges(map in flow_map()) {
        let shifted = shift_min(&map);
        prop_assert_eq!(shifted.min(), 0.0);
        let centered = center_abs_median(&shifted);
        prop_assert!(centered.values().iter().all(|&v| v >= 0.0));
        let squashed = squash(&centered);
        // The logistic rounds to exactly 1.0 for inputs above ~37.
        prop_assert!(squashed.values().iter().all(|&v| (0.5..=1.0).contains(&v)));
    }

    #[test]
    fn process_shape_bounds_and_replication(
        map in flow_map(), gr in 1usize..9, gc in 1usize..9, k in 1usize..4, c_th in 0.05f64..1.0,
    ) {
        let out = process(&map, gr, gc, k, c_th).unwrap();
        prop_assert_eq!(out.len(), gr * gc * k);
        let lo = c_th / (1.0 + E * E);
        let hi = c_th / (1.0 + E);
        for &t in out.values() {
            prop_assert!(t > 0.0 && t <= c_th / 2.0);
            prop_assert!(t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12), "{} outside [{}, {}]", t, lo, hi);
        }
        for b in 1..k {
            prop_assert_eq!(out.block(b), out.block(0));
        }
    }

    #[test]
    fn process_translation_invariant(map in dyadic_map(), shift in -256i32..256, gr in 1usize..6, gc in 1usize..6) {
        let c = shift as f64 / 4.0;
        let moved = FlowMap::new(map.rows(), map.cols(), map.values().iter().map(|v| v + c).collect()).unwrap();
        prop_assert_eq!(process(&map, gr, gc, 2, 0.5).unwrap(), process(&moved, gr, gc, 2, 0.5).unwrap());
    }

    #[test]
    fn elementwise_stages_commute_with_permutation(map in flow_map(), seed in any::<u64>()) {
        let n = map.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permute = |m: &FlowMap| FlowMap::new(m.rows(), m.cols(), perm.iter().map(|&p| m.values()[p]).collect()).unwrap();
        let stages = |m: &FlowMap| squash(&center_abs_median(&shift_min(m)));
        prop_assert_eq!(stages(&permute(&map)), permute(&stages(&map)));
    }

    #[test]
    fn thresholds_decrease_with_flow(f1 in 0.5f64..1.0, f2 in 0.5f64..1.0, c_th in 0.05f64..1.0) {
        prop_assume!(f1 < f2);
        let t = vectorize_thresholds(&FlowMap::new(1, 2, vec![f1, f2]).unwrap(), 1, c_th).unwrap();
        prop_assert!(t.values()[0] > t.values()[1]);
    }

    #[test]
    fn constant_vector_equals_scalar(g in grid(), v in 0.0f64..1.0) {
        let vector = ThresholdVector::uniform(g.rows(), g.cols(), g.boxes(), v).unwrap();
        prop_assert_eq!(
            threshold_detections(&g, Thresholds::PerEntry(&vector)).unwrap(),
            threshold_detections(&g, Thresholds::Scalar(v)).unwrap()
        );
    }

    #[test]
    fn detections_respect_thresholds(g in grid(), v in 0.0f64..1.0) {
        for d in threshold_detections(&g, Thresholds::Scalar(v)).unwrap() {
            prop_assert!(d.row < g.rows() && d.col < g.cols() && d.box_index < g.boxes());
            prop_assert!(d.confidence > v);
        }
    }

    #[test]
    fn lowering_one_threshold_keeps_cell_admitted(g in grid(), base in 0.0f64..1.0, drop in 0.0f64..1.0, pick in any::<prop::sample::Index>()) {
        let n = g.rows() * g.cols() * g.boxes();
        let before = ThresholdVector::uniform(g.rows(), g.cols(), g.boxes(), base).unwrap();
        let mut values = before.values().to_vec();
        let at = pick.index(n);
        values[at] *= drop;
        let after = ThresholdVector::new(g.rows(), g.cols(), g.boxes(), values).unwrap();
        let old = threshold_detections(&g, Thresholds::PerEntry(&before)).unwrap();
        let new = threshold_detections(&g, Thresholds::PerEntry(&after)).unwrap();
        for d in &old {
            let now = new.iter().find(|e| (e.row, e.col) == (d.row, d.col));
            prop_assert!(now.is_some_and(|e| e.confidence >= d.confidence));
        }
        prop_assert!(new.len() >= old.len());
    }

    #[test]
    fn nms_subset_bounded_idempotent(dets in detections(12), thr in 0.0f64..1.0) {
        let kept = nms(&dets, thr);
        prop_assert!(kept.iter().all(|k| dets.contains(k)));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
            }
        }
        prop_assert_eq!(nms(&kept, thr), kept.clone());
    }

    #[test]
    fn nms_matches_exhaustive_search(dets in detections(6), thr in 0.0f64..1.0) {
        let fixed = nms_fixed_points(&dets, thr);
        prop_assert_eq!(fixed.len(), 1);
        prop_assert_eq!(&nms(&dets, thr), &fixed[0]);
    }

    #[test]
    fn accounting_identity_and_reference(dets in detections(6), truth in prop::collection::vec(bbox(), 0..6), m in 0.05f64..0.9) {
        let metrics = score_against_truth(&dets, &truth, m);
        prop_assert_eq!(
            metrics.total_detected,
            metrics.correctly_detected + metrics.falsely_detected + metrics.overlapped_detected
        );
        prop_assert_eq!(metrics.total_detected, dets.len());
        prop_assert!(metrics.correctly_detected <= truth.len());
        prop_assert!((0.0..=1.0).contains(&metrics.true_positive_rate));
        let (c, f, o) = reference_counts(&dets, &truth, m);
        prop_assert_eq!(
            (metrics.correctly_detected, metrics.falsely_detected, metrics.overlapped_detected),
            (c, f, o)
        );
    }

    #[test]
    fn queue_law(q in 0.0f64..1e4, a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let next = queue_update(q, a, b).unwrap();
        prop_assert_eq!(next, (q + a - b).max(0.0));
        prop_assert!(next >= 0.0);
    }

    #[test]
    fn selection_is_argmax(q in 0.0f64..1e4, obs in observation(), cfg in controller_config()) {
        let h = dpp_score(ModelChoice::Hybrid, q, &obs, &cfg);
        let t = dpp_score(ModelChoice::Odn, q, &obs, &cfg);
        let expected = if t > h { ModelChoice::Odn } else { ModelChoice::Hybrid };
        prop_assert_eq!(dpp_select(q, &obs, &cfg), expected);
        let generic = dpp_argmax(cfg.v, q, &[
            (cfg.w_p * obs.num_hybrid as f64, cfg.w1),
            (obs.num_odn as f64, cfg.w2),
        ]);
        prop_assert_eq!(generic.map(ModelChoice::from_index), Some(expected));
    }

    #[test]
    fn decision_switches_at_most_once(obs in observation(), cfg in controller_config()) {
        let mut switches = 0;
        let mut last = dpp_select(0.0, &obs, &cfg);
        for step in 1..=2000 {
            let now = dpp_select(step as f64 * 5.0, &obs, &cfg);
            if now != last {
                switches += 1;
                last = now;
            }
        }
        prop_assert!(switches <= 1);
    }

    #[test]
    fn power_of_two_scaling_keeps_decision(q in 0.0f64..1e4, obs in observation(), cfg in controller_config(), k in -8i32..8) {
        let c = 2f64.powi(k);
        let scaled = ControllerConfig { v: cfg.v * c, w1: cfg.w1 * c, w2: cfg.w2 * c, ..cfg };
        prop_assert_eq!(dpp_select(q, &obs, &cfg), dpp_select(q, &obs, &scaled));
    }

    #[test]
    fn general_scaling_keeps_clear_decisions(q in 0.0f64..1e4, obs in observation(), cfg in controller_config(), c in 0.01f64..100.0) {
        let h = dpp_score(ModelChoice::Hybrid, q, &obs, &cfg);
        let t = dpp_score(ModelChoice::Odn, q, &obs, &cfg);
        prop_assume!((h - t).abs() > 1e-9 * (h.abs() + t.abs()));
        let scaled = ControllerConfig { v: cfg.v * c, w1: cfg.w1 * c, w2: cfg.w2 * c, ..cfg };
        prop_assert_eq!(dpp_select(q, &obs, &cfg), dpp_select(q, &obs, &scaled));
    }

    #[test]
    fn drift_bound_on_random_trajectories(steps in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..200)) {
        let mut q = 0.0;
        let mut traj = Vec::with_capacity(steps.len());
        for (a, b) in steps {
            traj.push((q, a, b));
            q = queue_update(q, a, b).unwrap();
        }
        prop_assert!(drift_bound_check(&traj).is_clean());
    }
}
