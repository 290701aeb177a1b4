//! File-level commands: tracking a detection file, evaluating a track file
//! and the randomized geometry/cascade self-check.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{apply_adjustment, denormalize_box, normalize_box, BoxDelta, DetectionRegion};
use crate::error::{Error, Result};
use crate::geometry::{
    decode_corners, load_rig, project_box, sample_box_features, BoxState, CameraModel, FeatureMap, SamplingConfig,
};
use crate::io::{
    ego_to_world, frames_to_string, load_detections, load_tracks, write_atomic, FrameRecord, ObjectRecord, Sequence,
};
use crate::metrics::{evaluate, EvalFrame, EvalObject, EvalSequence, MotReport, DEFAULT_DIST_THRESHOLD};
use crate::tracker::{AssociationMode, Frame, Measurement, Tracker, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub mode: AssociationMode,
    pub sequences: usize,
    pub frames: usize,
    pub detections: usize,
    pub track_boxes: usize,
    pub distinct_tracks: usize,
    /// Detections whose RoI feature was dropped because no camera sees them.
    pub roi_features_dropped: usize,
}

fn any_camera_sees(b: &BoxState, rig: &[CameraModel]) -> Result<bool> {
    Ok(project_box(b, rig)?.iter().any(|r| r.visibility.has_pixels()))
}

/// Tracks every sequence with a fresh tracker and returns the track-file
/// frames (world frame, `track_id` = tracker label).
pub fn track_sequences(
    sequences: &[Sequence],
    rig: Option<&[CameraModel]>,
    cfg: &TrackerConfig,
    mode: AssociationMode,
) -> Result<(Vec<FrameRecord>, TrackSummary)> {
    let classes: Vec<String> = {
        let mut names: Vec<String> = sequences
            .iter()
            .flat_map(|s| s.frames.iter().flat_map(|f| f.detections.iter().map(|d| d.class.clone())))
            .collect();
        names.sort();
        names.dedup();
        names
    };
    let class_id: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut out = Vec::new();
    let mut summary = TrackSummary {
        mode,
        sequences: sequences.len(),
        frames: 0,
        detections: 0,
        track_boxes: 0,
        distinct_tracks: 0,
        roi_features_dropped: 0,
    };
    for seq in sequences {
        let mut tracker = Tracker::new(mode, cfg.clone())?;
        let mut labels = std::collections::BTreeSet::new();
        for f in &seq.frames {
            let mut measurements = Vec::with_capacity(f.detections.len());
            for d in &f.detections {
                let world = match &f.ego_pose {
                    Some(p) => ego_to_world(&d.bbox, p),
                    None => d.bbox,
                };
                let mut z = Measurement::from_box(&world, class_id[d.class.as_str()], d.score);
                z.roi_feature = d.roi_feature.clone();
                z.query_feature = d.query_feature.clone();
                if let Some(rig) = rig {
                    if z.roi_feature.is_some() && !any_camera_sees(&d.bbox, rig)? {
                        z.roi_feature = None;
                        summary.roi_features_dropped += 1;
                    }
                }
                measurements.push(z);
            }
            summary.frames += 1;
            summary.detections += measurements.len();
            let mut tracks = tracker.step(&Frame {
                timestamp: f.timestamp,
                measurements,
            })?;
            tracks.sort_by_key(|t| t.label);
            summary.track_boxes += tracks.len();
            labels.extend(tracks.iter().map(|t| t.label));
            out.push(FrameRecord {
                sequence_id: f.sequence_id.clone(),
                timestamp: f.timestamp,
                ego_pose: None,
                detections: tracks
                    .into_iter()
                    .map(|t| ObjectRecord {
                        track_id: Some(t.label),
                        bbox: t.bbox,
                        class: classes[t.class_id].clone(),
                        score: t.score,
                        roi_feature: None,
                        query_feature: None,
                    })
                    .collect(),
            });
        }
        summary.distinct_tracks += labels.len();
    }
    Ok((out, summary))
}

/// `track` command: reads and validates every input before writing the
/// output in one atomic step.
pub fn run_track(
    detections: &Path,
    cameras: Option<&Path>,
    config: Option<&Path>,
    mode: AssociationMode,
    out: &Path,
) -> Result<TrackSummary> {
    let cfg = match config {
        Some(p) => TrackerConfig::load(p)?,
        None => TrackerConfig::default(),
    };
    let rig = cameras.map(load_rig).transpose()?;
    let sequences = load_detections(detections)?;
    let (frames, summary) = track_sequences(&sequences, rig.as_deref(), &cfg, mode)?;
    write_atomic(out, frames_to_string(&frames).as_bytes())?;
    Ok(summary)
}

fn eval_objects(frame: &FrameRecord) -> Vec<EvalObject> {
    frame
        .detections
        .iter()
        .map(|d| EvalObject {
            label: d.track_id.expect("track files carry ids"),
            bbox: d.bbox,
            class: d.class.clone(),
            score: d.score,
        })
        .collect()
}

/// Pairs track frames with ground-truth frames by sequence and timestamp.
/// Ground-truth frames without track output count as empty output.
pub fn align_for_eval(tracks: &[Sequence], gt: &[Sequence]) -> Result<Vec<EvalSequence>> {
    let mut by_key: BTreeMap<(&str, u64), &FrameRecord> = BTreeMap::new();
    for s in tracks {
        for f in &s.frames {
            by_key.insert((s.id.as_str(), f.timestamp.to_bits()), f);
        }
    }
    let mut used = 0usize;
    let mut out = Vec::with_capacity(gt.len());
    for s in gt {
        let frames = s
            .frames
            .iter()
            .map(|g| {
                let tracks = match by_key.get(&(s.id.as_str(), g.timestamp.to_bits())) {
                    Some(t) => {
                        used += 1;
                        eval_objects(t)
                    }
                    None => Vec::new(),
                };
                EvalFrame {
                    timestamp: g.timestamp,
                    gt: eval_objects(g),
                    tracks,
                }
            })
            .collect();
        out.push(EvalSequence { id: s.id.clone(), frames });
    }
    if used != by_key.len() {
        let (seq, t) = by_key
            .iter()
            .find(|((seq, bits), _)| {
                !gt.iter()
                    .any(|s| s.id == *seq && s.frames.iter().any(|f| f.timestamp.to_bits() == *bits))
            })
            .map(|((seq, _), f)| (seq.to_string(), f.timestamp))
            .expect("an unmatched frame exists");
        return Err(Error::invalid(format!(
            "track frame at t={t} in sequence {seq:?} has no ground-truth frame"
        )));
    }
    Ok(out)
}

pub fn report_to_string(r: &MotReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

pub fn load_report(path: &Path) -> Result<MotReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// `eval` command.
pub fn run_eval(tracks: &Path, gt: &Path, out: &Path) -> Result<MotReport> {
    let t = load_tracks(tracks)?;
    let g = load_tracks(gt)?;
    let report = evaluate(&align_for_eval(&t, &g)?, DEFAULT_DIST_THRESHOLD)?;
    write_atomic(out, report_to_string(&report).as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub cameras: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Corners rebuilt from the box parameters by explicit rotation, then pushed
/// through `K (R p + t)` one at a time.
fn oracle_roi(b: &BoxState, cam: &CameraModel) -> Option<[f64; 4]> {
    let (s, c) = (b.sin_yaw, b.cos_yaw);
    let (mut umin, mut vmin, mut umax, mut vmax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for sx in [-0.5, 0.5] {
        for sy in [-0.5, 0.5] {
            for sz in [-0.5, 0.5] {
                let (dx, dy, dz) = (sx * b.l, sy * b.w, sz * b.h);
                let p = Point3::new(b.cx + c * dx - s * dy, b.cy + s * dx + c * dy, b.cz + dz);
                let r = cam.extrinsic.fixed_view::<3, 3>(0, 0);
                let t = cam.extrinsic.fixed_view::<3, 1>(0, 3);
                let pc: Vector3<f64> = r * p.coords + t;
                if pc.z <= crate::geometry::MIN_DEPTH {
                    return None;
                }
                let q = cam.intrinsic * pc;
                let (u, v) = (q.x / q.z, q.y / q.z);
                umin = umin.min(u);
                vmin = vmin.min(v);
                umax = umax.max(u);
                vmax = vmax.max(v);
            }
        }
    }
    Some([umin, vmin, umax, vmax])
}

/// Box in front of `cam` at random range, offset, size and heading.
fn box_in_view(cam: &CameraModel, rng: &mut ChaCha8Rng) -> BoxState {
    let depth = rng.gen_range(5.0..60.0);
    let pc = Vector3::new(rng.gen_range(-0.4..0.4) * depth, rng.gen_range(-0.2..0.2) * depth, depth);
    let r = cam.rotation();
    let t = cam.extrinsic.fixed_view::<3, 1>(0, 3).into_owned();
    let world = r.transpose() * (pc - t);
    BoxState::new(
        [world.x, world.y, world.z],
        [rng.gen_range(0.5..3.0), rng.gen_range(0.5..6.0), rng.gen_range(0.5..3.0)],
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        [0.0; 2],
    )
}

/// Randomized geometry and cascade checks against independent oracles.
pub fn geometry_selfcheck(rig: &[CameraModel], seed: u64) -> Result<SelfcheckReport> {
    if rig.is_empty() {
        return Err(Error::invalid("camera rig is empty"));
    }
    for cam in rig {
        cam.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // projection: RoI extremes equal the oracle's
    let mut chk = CheckResult { name: "roi_projection".into(), trials: 0, failures: 0, max_error: 0.0 };
    for _ in 0..1000 {
        let ci = rng.gen_range(0..rig.len());
        let b = box_in_view(&rig[ci], &mut rng);
        let roi = project_box(&b, rig)?[ci];
        chk.trials += 1;
        match (roi.bbox, oracle_roi(&b, &rig[ci])) {
            (Some(r), Some(o)) => {
                let e = [r.xmin - o[0], r.ymin - o[1], r.xmax - o[2], r.ymax - o[3]]
                    .iter()
                    .fold(0.0f64, |m, d| m.max(d.abs()));
                chk.max_error = chk.max_error.max(e);
                if e > 1e-6 {
                    chk.failures += 1;
                }
            }
            (None, None) => {}
            _ => chk.failures += 1,
        }
    }
    checks.push(chk);

    // corners: centroid at the center, edges of the box dimensions
    let mut chk = CheckResult { name: "corner_decode".into(), trials: 0, failures: 0, max_error: 0.0 };
    for _ in 0..1000 {
        let b = box_in_view(&rig[0], &mut rng);
        let c = decode_corners(&b)?;
        let cen = c.centroid();
        let edges = [(0b001, b.h), (0b010, b.w), (0b100, b.l)];
        let mut e = (cen - b.center()).norm();
        for (bit, len) in edges {
            e = e.max(((c.0[bit] - c.0[0]).norm() - len).abs());
        }
        chk.trials += 1;
        chk.max_error = chk.max_error.max(e);
        if e > 1e-9 {
            chk.failures += 1;
        }
    }
    checks.push(chk);

    // cascade: zero delta is exact, random deltas keep a valid box
    let region = DetectionRegion::default();
    let mut chk = CheckResult { name: "cascade_invariants".into(), trials: 0, failures: 0, max_error: 0.0 };
    for _ in 0..1000 {
        let b = box_in_view(&rig[0], &mut rng);
        let same = apply_adjustment(&b, &BoxDelta::identity_for(&b))?;
        let d = BoxDelta {
            d_x: rng.gen_range(-1.0..1.0),
            d_y: rng.gen_range(-1.0..1.0),
            d_z: rng.gen_range(-1.0..1.0),
            d_w: rng.gen_range(-2.0..2.0),
            d_l: rng.gen_range(-2.0..2.0),
            d_h: rng.gen_range(-2.0..2.0),
            cos_yaw: rng.gen_range(-3.0..3.0),
            sin_yaw: rng.gen_range(-3.0..3.0),
            vx: rng.gen_range(-10.0..10.0),
            vy: rng.gen_range(-10.0..10.0),
        };
        let moved = apply_adjustment(&b, &d)?;
        let unit = (moved.cos_yaw.hypot(moved.sin_yaw) - 1.0).abs();
        let round = denormalize_box(&normalize_box(&b, &region), &region);
        let rt = (round.cx - b.cx).abs().max((round.cy - b.cy).abs()).max((round.cz - b.cz).abs());
        chk.trials += 1;
        chk.max_error = chk.max_error.max(unit).max(rt);
        let dims_ok = moved.w > 0.0 && moved.l > 0.0 && moved.h > 0.0;
        if same != b || !dims_ok || unit > 1e-9 || rt > 1e-9 {
            chk.failures += 1;
        }
    }
    checks.push(chk);

    // sampling: a constant map pools to that constant wherever a box is seen
    let maps: Vec<FeatureMap> = rig
        .iter()
        .map(|c| {
            let (h, w) = ((c.height / 16).max(1) as usize, (c.width / 16).max(1) as usize);
            FeatureMap::from_fn(h, w, 4, |_, _, ch| ch as f64 + 1.0)
        })
        .collect::<Result<_>>()?;
    let mut chk = CheckResult { name: "constant_map_sampling".into(), trials: 0, failures: 0, max_error: 0.0 };
    for _ in 0..200 {
        let ci = rng.gen_range(0..rig.len());
        let b = box_in_view(&rig[ci], &mut rng);
        let s = sample_box_features(&b, rig, &maps, &SamplingConfig::default())?;
        chk.trials += 1;
        if s.rois.iter().any(|r| r.visibility.has_pixels()) {
            let (h, w, c) = s.fused.shape();
            let mut e = 0.0f64;
            for ph in 0..h {
                for pw in 0..w {
                    for (ch, v) in s.fused.bin(ph, pw).iter().enumerate().take(c) {
                        e = e.max((v - (ch as f64 + 1.0)).abs());
                    }
                }
            }
            chk.max_error = chk.max_error.max(e);
            if e > 1e-9 {
                chk.failures += 1;
            }
        } else {
            chk.failures += 1;
        }
    }
    checks.push(chk);

    let passed = checks.iter().all(|c| c.failures == 0);
    Ok(SelfcheckReport {
        seed,
        cameras: rig.iter().map(|c| c.name.clone()).collect(),
        checks,
        passed,
    })
}

/// `selfcheck` command.
pub fn run_geometry_selfcheck(rig: &Path, seed: u64) -> Result<SelfcheckReport> {
    geometry_selfcheck(&load_rig(rig)?, seed)
}
