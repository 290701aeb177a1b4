use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxState;

/// One object line inside a frame record. `track_id` is present in track
/// files and ground truth, absent in detection files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    track_id: Option<u64>,
    #[serde(rename = "box")]
    bbox: Vec<f64>,
    class: String,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    roi_feature: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    query_feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    sequence_id: String,
    timestamp: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    ego_pose: Option<Vec<f64>>,
    detections: Vec<RawObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub track_id: Option<u64>,
    pub bbox: BoxState,
    pub class: String,
    pub score: f64,
    pub roi_feature: Option<Vec<f64>>,
    pub query_feature: Option<Vec<f64>>,
}

/// One line of a detection or track file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub sequence_id: String,
    pub timestamp: f64,
    /// Row-major ego-to-world transform.
    pub ego_pose: Option<[f64; 16]>,
    pub detections: Vec<ObjectRecord>,
}

/// Frames of one sequence, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Detections,
    Tracks,
}

fn schema(path: &Path, line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn check_vector(v: &[f64], what: &str) -> std::result::Result<(), String> {
    if v.is_empty() {
        return Err(format!("{what} is empty"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{what} has a non-finite entry"));
    }
    Ok(())
}

fn check_pose(p: &[f64; 16]) -> std::result::Result<(), String> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err("non-finite entry".into());
    }
    if p[12..] != [0.0, 0.0, 0.0, 1.0] {
        return Err("last row must be [0, 0, 0, 1]".into());
    }
    let m = Matrix4::from_row_slice(p);
    let r = m.fixed_view::<3, 3>(0, 0);
    if (r.transpose() * r - nalgebra::Matrix3::identity()).norm() > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
        return Err("rotation block is not a proper rotation".into());
    }
    Ok(())
}

fn convert(raw: RawFrame, kind: FileKind, path: &Path, line: usize) -> Result<FrameRecord> {
    if raw.sequence_id.is_empty() {
        return Err(schema(path, line, "sequence_id", "must not be empty"));
    }
    if !raw.timestamp.is_finite() {
        return Err(schema(path, line, "timestamp", "must be finite"));
    }
    let ego_pose = match raw.ego_pose {
        None => None,
        Some(v) => {
            let p: [f64; 16] = v
                .try_into()
                .map_err(|v: Vec<f64>| schema(path, line, "ego_pose", format!("expected 16 numbers, got {}", v.len())))?;
            check_pose(&p).map_err(|m| schema(path, line, "ego_pose", m))?;
            Some(p)
        }
    };
    let mut detections = Vec::with_capacity(raw.detections.len());
    for (i, o) in raw.detections.into_iter().enumerate() {
        let at = |f: &str| format!("detections[{i}].{f}");
        let arr: [f64; 10] = o
            .bbox
            .try_into()
            .map_err(|v: Vec<f64>| schema(path, line, at("box"), format!("expected 10 numbers, got {}", v.len())))?;
        let bbox = BoxState::from_array(arr);
        bbox.validate().map_err(|e| schema(path, line, at("box"), e.to_string()))?;
        if o.class.is_empty() {
            return Err(schema(path, line, at("class"), "must not be empty"));
        }
        if !(0.0..=1.0).contains(&o.score) {
            return Err(schema(path, line, at("score"), format!("{} is not in [0, 1]", o.score)));
        }
        for (name, f) in [("roi_feature", &o.roi_feature), ("query_feature", &o.query_feature)] {
            if let Some(v) = f {
                check_vector(v, name).map_err(|m| schema(path, line, at(name), m))?;
            }
        }
        if kind == FileKind::Tracks && o.track_id.is_none() {
            return Err(schema(path, line, at("track_id"), "missing"));
        }
        detections.push(ObjectRecord {
            track_id: o.track_id,
            bbox,
            class: o.class,
            score: o.score,
            roi_feature: o.roi_feature,
            query_feature: o.query_feature,
        });
    }
    if kind == FileKind::Tracks {
        let mut seen = BTreeMap::new();
        for (i, d) in detections.iter().enumerate() {
            if let Some(j) = seen.insert(d.track_id, i) {
                return Err(schema(
                    path,
                    line,
                    format!("detections[{i}].track_id"),
                    format!("duplicates detections[{j}].track_id"),
                ));
            }
        }
    }
    Ok(FrameRecord {
        sequence_id: raw.sequence_id,
        timestamp: raw.timestamp,
        ego_pose,
        detections,
    })
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_frames(text: &str, kind: FileKind, path: &Path) -> Result<Vec<FrameRecord>> {
    let mut frames = Vec::new();
    let mut last: BTreeMap<String, f64> = BTreeMap::new();
    for (idx, l) in text.lines().enumerate() {
        let line = idx + 1;
        if l.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(l);
        let raw: RawFrame = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() && field != "." {
                schema(path, line, field, inner.to_string())
            } else {
                Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: inner.to_string(),
                }
            }
        })?;
        let frame = convert(raw, kind, path, line)?;
        if let Some(&prev) = last.get(&frame.sequence_id) {
            if !(frame.timestamp > prev) {
                return Err(schema(
                    path,
                    line,
                    "timestamp",
                    format!("{} does not follow {prev} in sequence {}", frame.timestamp, frame.sequence_id),
                ));
            }
        }
        last.insert(frame.sequence_id.clone(), frame.timestamp);
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_frames(path: &Path, kind: FileKind) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_frames(&text, kind, path)
}

/// Groups frames by sequence, ordered by first appearance.
pub fn group_sequences(frames: Vec<FrameRecord>) -> Vec<Sequence> {
    let mut order: Vec<Sequence> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for f in frames {
        let i = *index.entry(f.sequence_id.clone()).or_insert_with(|| {
            order.push(Sequence {
                id: f.sequence_id.clone(),
                frames: Vec::new(),
            });
            order.len() - 1
        });
        order[i].frames.push(f);
    }
    order
}

pub fn load_detections(path: &Path) -> Result<Vec<Sequence>> {
    Ok(group_sequences(load_frames(path, FileKind::Detections)?))
}

pub fn load_tracks(path: &Path) -> Result<Vec<Sequence>> {
    Ok(group_sequences(load_frames(path, FileKind::Tracks)?))
}

/// Serializes frames as JSON lines, one frame per line.
pub fn frames_to_string(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for f in frames {
        let raw = RawFrame {
            sequence_id: f.sequence_id.clone(),
            timestamp: f.timestamp,
            ego_pose: f.ego_pose.map(|p| p.to_vec()),
            detections: f
                .detections
                .iter()
                .map(|d| RawObject {
                    track_id: d.track_id,
                    bbox: d.bbox.to_array().to_vec(),
                    class: d.class.clone(),
                    score: d.score,
                    roi_feature: d.roi_feature.clone(),
                    query_feature: d.query_feature.clone(),
                })
                .collect(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&raw).expect("frame serializes"));
    }
    out
}

/// Writes via a temporary file in the target directory, so a failed run
/// never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_frames(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    write_atomic(path, frames_to_string(frames).as_bytes())
}

/// Maps an ego-frame box into the world frame given a row-major ego pose.
/// Heading and velocity are rotated by the pose's yaw about the z axis.
pub fn ego_to_world(b: &BoxState, pose: &[f64; 16]) -> BoxState {
    let m = Matrix4::from_row_slice(pose);
    let p = m.transform_point(&b.center());
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let (s, c) = yaw.sin_cos();
    let v = nalgebra::Matrix2::new(c, -s, s, c) * Vector2::new(b.vx, b.vy);
    BoxState {
        cx: p.x,
        cy: p.y,
        cz: p.z,
        cos_yaw: c * b.cos_yaw - s * b.sin_yaw,
        sin_yaw: s * b.cos_yaw + c * b.sin_yaw,
        vx: v.x,
        vy: v.y,
        ..*b
    }
}
