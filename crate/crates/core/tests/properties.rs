use proptest::prelude::*;

use sparsetrack::cascade::{apply_adjustment, BoxDelta};
use sparsetrack::geometry::{aggregate_views, BoxState, PooledGrid, Visibility};
use sparsetrack::metrics::{compute_mota_motp, EvalFrame, EvalObject, EvalSequence};
use sparsetrack::tracker::{cosine_similarity, AssociationMode, Frame, Measurement, Tracker, TrackerConfig};

fn any_box() -> impl Strategy<Value = BoxState> {
    (
        (-100.0..100.0f64, -100.0..100.0f64, -5.0..5.0f64),
        (0.05..10.0f64, 0.05..20.0f64, 0.05..5.0f64),
        -4.0..4.0f64,
    )
        .prop_map(|((x, y, z), (w, l, h), yaw)| BoxState::new([x, y, z], [w, l, h], yaw, [0.0, 0.0]))
}

fn any_delta() -> impl Strategy<Value = BoxDelta> {
    (
        prop::array::uniform6(-3.0..3.0f64),
        (-10.0..10.0f64, -10.0..10.0f64),
        prop::array::uniform2(-20.0..20.0f64),
    )
        .prop_filter("heading must be non-zero", |(_, (c, s), _)| c.hypot(*s) > 1e-9)
        .prop_map(|(d, (c, s), v)| BoxDelta {
            d_x: d[0],
            d_y: d[1],
            d_z: d[2],
            d_w: d[3],
            d_l: d[4],
            d_h: d[5],
            cos_yaw: c,
            sin_yaw: s,
            vx: v[0],
            vy: v[1],
        })
}

fn obj(label: u64, x: f64, y: f64) -> EvalObject {
    EvalObject {
        label,
        bbox: BoxState::new([x, y, 0.0], [2.0, 4.0, 1.5], 0.0, [0.0; 2]),
        class: "car".into(),
        score: 1.0,
    }
}

/// Ground truth on a coarse grid with tracks jittered around it, some of
/// them dropped, over a few frames.
fn scene() -> impl Strategy<Value = Vec<EvalSequence>> {
    let frame = prop::collection::vec((0..6u64, -1.5..1.5f64, -1.5..1.5f64, any::<bool>(), 0..4u64), 1..6);
    prop::collection::vec(frame, 1..5).prop_map(|frames| {
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(k, objs)| {
                let mut gt = Vec::new();
                let mut tracks = Vec::new();
                for (id, dx, dy, keep, swap) in objs {
                    if gt.iter().any(|g: &EvalObject| g.label == id) {
                        continue;
                    }
                    let (x, y) = (id as f64 * 20.0, k as f64);
                    gt.push(obj(id, x, y));
                    if keep {
                        tracks.push(obj(100 + id * 4 + swap, x + dx, y + dy));
                    }
                }
                tracks.sort_by_key(|t| t.label);
                tracks.dedup_by_key(|t| t.label);
                EvalFrame {
                    timestamp: k as f64 * 0.5,
                    gt,
                    tracks,
                }
            })
            .collect();
        vec![EvalSequence { id: "p".into(), frames }]
    })
}

proptest! {
    #[test]
    fn adjusted_boxes_stay_valid(b in any_box(), d in any_delta()) {
        let out = apply_adjustment(&b, &d).unwrap();
        prop_assert!(out.w > 0.0 && out.l > 0.0 && out.h > 0.0);
        prop_assert!((out.cos_yaw.hypot(out.sin_yaw) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn zero_delta_is_identity(b in any_box()) {
        prop_assert_eq!(apply_adjustment(&b, &BoxDelta::identity_for(&b)).unwrap(), b);
    }

    #[test]
    fn metrics_ignore_track_relabeling(s in scene(), offset in 1u64..1000) {
        let before = compute_mota_motp(&s, 2.0).unwrap();
        let mut relabeled = s.clone();
        for f in &mut relabeled[0].frames {
            for t in &mut f.tracks {
                t.label = t.label * 7 + offset;
            }
        }
        let after = compute_mota_motp(&relabeled, 2.0).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn a_false_positive_never_raises_mota(s in scene(), frame in 0usize..5) {
        let before = compute_mota_motp(&s, 2.0).unwrap();
        let mut more = s.clone();
        let k = frame % more[0].frames.len();
        more[0].frames[k].tracks.push(obj(9999, -500.0, -500.0));
        let after = compute_mota_motp(&more, 2.0).unwrap();
        prop_assert!(after.mota().unwrap() <= before.mota().unwrap());
        prop_assert_eq!(after.false_positives, before.false_positives + 1);
        // MOTP only averages over matches
        prop_assert_eq!(after.motp(), before.motp());
    }

    #[test]
    fn view_aggregation_ignores_order(
        grids in prop::collection::vec((prop::collection::vec(-5.0..5.0f64, 8), any::<bool>()), 1..6),
        seed in any::<u64>(),
    ) {
        let pooled: Vec<(usize, PooledGrid)> = grids
            .iter()
            .enumerate()
            .map(|(cam, (data, _))| (cam, PooledGrid { out_h: 2, out_w: 2, channels: 2, data: data.clone() }))
            .collect();
        let vis: Vec<Visibility> = grids
            .iter()
            .map(|(_, v)| if *v { Visibility::Visible } else { Visibility::BehindCamera })
            .collect();
        let reference = aggregate_views(&pooled, &vis, (2, 2, 2)).unwrap();
        let mut order: Vec<usize> = (0..pooled.len()).collect();
        order.rotate_left((seed as usize) % pooled.len());
        if seed % 2 == 1 {
            order.reverse();
        }
        let p2: Vec<_> = order.iter().map(|&i| pooled[i].clone()).collect();
        let v2: Vec<_> = order.iter().map(|&i| vis[i]).collect();
        prop_assert_eq!(aggregate_views(&p2, &v2, (2, 2, 2)).unwrap(), reference);
    }

    #[test]
    fn cosine_is_scale_free(
        a in prop::collection::vec(-10.0..10.0f64, 1..16),
        s in 0.01..100.0f64,
    ) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
        let scaled: Vec<f64> = a.iter().map(|v| v * s).collect();
        let c = cosine_similarity(&a, &scaled).unwrap();
        prop_assert!((c - 1.0).abs() < 1e-12);
    }
}

fn frames(dets: &[Vec<(f64, f64, f64)>], with_features: Option<u64>) -> Vec<Frame> {
    dets.iter()
        .enumerate()
        .map(|(k, objs)| {
            let t = k as f64 * 0.5;
            let measurements = objs
                .iter()
                .enumerate()
                .map(|(i, &(x, y, score))| {
                    let b = BoxState::new([x + t, y, 0.0], [2.0, 4.0, 1.5], 0.0, [1.0, 0.0]);
                    let mut z = Measurement::from_box(&b, 0, score);
                    if let Some(seed) = with_features {
                        let f = |salt: u64| {
                            (0..4)
                                .map(|c| ((seed ^ salt).wrapping_mul(2654435761 + c * 97 + i as u64 * 31 + k as u64) % 1000) as f64 - 500.0)
                                .collect::<Vec<f64>>()
                        };
                        z.roi_feature = Some(f(1));
                        z.query_feature = Some(f(2));
                    }
                    z
                })
                .collect();
            Frame { timestamp: t, measurements }
        })
        .collect()
}

fn detections() -> impl Strategy<Value = Vec<Vec<(f64, f64, f64)>>> {
    prop::collection::vec(prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, 0.1..0.99f64), 0..4), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hypothesis_weights_sum_to_one(dets in detections()) {
        let mut t = Tracker::new(AssociationMode::PrH, TrackerConfig::default()).unwrap();
        for f in frames(&dets, Some(3)) {
            t.step(&f).unwrap();
            let hyps = &t.mbm_state().unwrap().hypotheses;
            let sum: f64 = hyps.iter().map(|h| h.weight).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(hyps.windows(2).all(|w| w[0].weight >= w[1].weight));
        }
    }

    #[test]
    fn zero_appearance_weights_ignore_embeddings(dets in detections(), seed in any::<u64>()) {
        let cfg = TrackerConfig { alpha: 0.0, beta: 0.0, ..TrackerConfig::default() };
        let mut plain = Tracker::new(AssociationMode::PrH, cfg.clone()).unwrap();
        let mut featured = Tracker::new(AssociationMode::PrH, cfg).unwrap();
        for (a, b) in frames(&dets, None).iter().zip(frames(&dets, Some(seed))) {
            prop_assert_eq!(plain.step(a).unwrap(), featured.step(&b).unwrap());
        }
    }

    #[test]
    fn labels_are_never_reused(dets in detections()) {
        let mut t = Tracker::new(AssociationMode::Pr, TrackerConfig::default()).unwrap();
        let mut retired = std::collections::BTreeSet::new();
        let mut live = std::collections::BTreeSet::new();
        for f in frames(&dets, None) {
            t.step(&f).unwrap();
            let now: std::collections::BTreeSet<u64> =
                t.mbm_state().unwrap().tracks.iter().map(|tr| tr.label).collect();
            prop_assert!(now.is_disjoint(&retired));
            retired.extend(live.difference(&now).copied());
            live = now;
        }
    }
}
