//! C ABI over the sparsetrack core: opaque tracker and camera-rig handles,
//! integer status codes and a per-thread last-error message.
//!
//! Boxes cross the boundary as 10 doubles in serialized order
//! `[cx, cy, h, w, cz, l, cos, sin, vx, vy]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sparsetrack::assignment::{hungarian, CostMatrix};
use sparsetrack::cascade::{apply_adjustment, BoxDelta};
use sparsetrack::geometry::{load_rig, project_box, synthetic_rig, CameraModel, Visibility};
use sparsetrack::pipeline::geometry_selfcheck;
use sparsetrack::tracker::{AssociationMode, Frame, Measurement, TrackOutput, Tracker, TrackerConfig};
use sparsetrack::{BoxState, Error};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInput = 3,
    Infeasible = 4,
    Numerical = 5,
    Sequencing = 6,
    Camera = 7,
    Config = 8,
    Io = 9,
    Parse = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StVisibility {
    Visible = 0,
    PartiallyVisible = 1,
    BehindCamera = 2,
    OutOfFrame = 3,
}

/// One detection. Feature pointers may be null when the length is 0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StDetection {
    pub bbox: [f64; 10],
    pub class_id: u32,
    pub score: f64,
    pub roi_feature: *const f64,
    pub roi_len: usize,
    pub query_feature: *const f64,
    pub query_len: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StTrack {
    pub track_id: u64,
    pub bbox: [f64; 10],
    pub class_id: u32,
    pub score: f64,
}

/// Opaque tracker handle.
pub struct StTracker {
    inner: Tracker,
    last: Vec<StTrack>,
}

/// Opaque camera rig handle.
pub struct StRig {
    cameras: Vec<CameraModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> StStatus {
    match e {
        Error::InvalidInput(_) | Error::Adjustment { .. } | Error::UndefinedSimilarity | Error::UndefinedMetric(_) => {
            StStatus::InvalidInput
        }
        Error::Infeasible(_) => StStatus::Infeasible,
        Error::Numerical(_) => StStatus::Numerical,
        Error::Sequencing { .. } => StStatus::Sequencing,
        Error::Camera { .. } => StStatus::Camera,
        Error::Config(_) => StStatus::Config,
        Error::Io(_) => StStatus::Io,
        Error::Parse { .. } | Error::Schema { .. } => StStatus::Parse,
    }
}

fn fail(status: StStatus, msg: impl Into<String>) -> StStatus {
    set_error(msg);
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), StStatus>) -> StStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(StStatus::Panic, "internal panic"),
    }
}

fn check(r: Result<(), Error>) -> Result<(), StStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn lift<T>(r: Result<T, Error>) -> Result<T, StStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), StStatus> {
    if p.is_null() {
        Err(fail(StStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, StStatus> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(StStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn feature(p: *const f64, len: usize, what: &str) -> Result<Option<Vec<f64>>, StStatus> {
    if len == 0 {
        return Ok(None);
    }
    non_null(p, what)?;
    Ok(Some(std::slice::from_raw_parts(p, len).to_vec()))
}

fn to_track(t: &TrackOutput) -> StTrack {
    StTrack {
        track_id: t.label,
        bbox: t.bbox.to_array(),
        class_id: t.class_id as u32,
        score: t.score,
    }
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn st_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a tracker. `mode` is one of `de`, `pr`, `pr+r`, `pr+h`;
/// `config_toml` may be null for defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_new(
    mode: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut StTracker,
) -> StStatus {
    guard(|| {
        non_null(out, "out")?;
        let mode: AssociationMode = lift(c_str(mode, "mode")?.parse())?;
        let cfg = if config_toml.is_null() {
            TrackerConfig::default()
        } else {
            lift(TrackerConfig::from_toml_str(c_str(config_toml, "config_toml")?))?
        };
        let t = lift(Tracker::new(mode, cfg))?;
        *out = Box::into_raw(Box::new(StTracker { inner: t, last: Vec::new() }));
        Ok(())
    })
}

/// # Safety
/// `t` must come from `st_tracker_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_free(t: *mut StTracker) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Feeds one frame. Up to `capacity` reported tracks are copied to `out` and
/// their total count to `n_out`; when `capacity` is too small the frame is
/// still consumed, `BufferTooSmall` is returned and the full list can be read
/// with `st_tracker_last_tracks`.
///
/// # Safety
/// `dets` must point to `n` detections (or be null with `n == 0`); `out`
/// must have room for `capacity` tracks (or be null with `capacity == 0`).
#[no_mangle]
pub unsafe extern "C" fn st_tracker_step(
    t: *mut StTracker,
    timestamp: f64,
    dets: *const StDetection,
    n: usize,
    out: *mut StTrack,
    capacity: usize,
    n_out: *mut usize,
) -> StStatus {
    let status = guard(|| {
        non_null(t, "tracker")?;
        non_null(n_out, "n_out")?;
        let dets = if n == 0 {
            &[][..]
        } else {
            non_null(dets, "detections")?;
            std::slice::from_raw_parts(dets, n)
        };
        let mut measurements = Vec::with_capacity(n);
        for (i, d) in dets.iter().enumerate() {
            let b = BoxState::from_array(d.bbox);
            check(b.validate().map_err(|e| Error::InvalidInput(format!("detection {i}: {e}"))))?;
            if !(0.0..=1.0).contains(&d.score) {
                return Err(fail(StStatus::InvalidInput, format!("detection {i}: score {} not in [0, 1]", d.score)));
            }
            let mut z = Measurement::from_box(&b, d.class_id as usize, d.score);
            z.roi_feature = feature(d.roi_feature, d.roi_len, "roi_feature")?;
            z.query_feature = feature(d.query_feature, d.query_len, "query_feature")?;
            measurements.push(z);
        }
        let t = &mut *t;
        let tracks = lift(t.inner.step(&Frame { timestamp, measurements }))?;
        t.last = tracks.iter().map(to_track).collect();
        t.last.sort_by_key(|x| x.track_id);
        Ok(())
    });
    if status != StStatus::Ok {
        return status;
    }
    st_tracker_last_tracks(t, out, capacity, n_out)
}

/// Copies the tracks reported by the latest step.
///
/// # Safety
/// As for `st_tracker_step`.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_last_tracks(
    t: *const StTracker,
    out: *mut StTrack,
    capacity: usize,
    n_out: *mut usize,
) -> StStatus {
    guard(|| {
        non_null(t, "tracker")?;
        non_null(n_out, "n_out")?;
        let last = &(*t).last;
        *n_out = last.len();
        let k = last.len().min(capacity);
        if k > 0 {
            non_null(out, "out")?;
            ptr::copy_nonoverlapping(last.as_ptr(), out, k);
        }
        if last.len() > capacity {
            return Err(fail(
                StStatus::BufferTooSmall,
                format!("{} tracks do not fit in {capacity}", last.len()),
            ));
        }
        Ok(())
    })
}

/// Loads and validates a JSON camera rig.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_rig_load(path: *const c_char, out: *mut *mut StRig) -> StStatus {
    guard(|| {
        non_null(out, "out")?;
        let cameras = lift(load_rig(Path::new(c_str(path, "path")?)))?;
        *out = Box::into_raw(Box::new(StRig { cameras }));
        Ok(())
    })
}

/// The built-in six-camera surround rig.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_rig_synthetic(out: *mut *mut StRig) -> StStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(StRig { cameras: synthetic_rig() }));
        Ok(())
    })
}

/// # Safety
/// `rig` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn st_rig_free(rig: *mut StRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// # Safety
/// `rig` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_rig_camera_count(rig: *const StRig) -> usize {
    if rig.is_null() {
        0
    } else {
        (*rig).cameras.len()
    }
}

/// Projects a box into camera `camera`. `roi` receives
/// `[xmin, ymin, xmax, ymax]` of the clipped rectangle, or NaNs when the box
/// has no pixels in that camera.
///
/// # Safety
/// `bbox` must point to 10 doubles, `roi` to 4, `visibility` to one value.
#[no_mangle]
pub unsafe extern "C" fn st_project_box(
    rig: *const StRig,
    bbox: *const f64,
    camera: usize,
    roi: *mut f64,
    visibility: *mut StVisibility,
) -> StStatus {
    guard(|| {
        non_null(rig, "rig")?;
        non_null(bbox, "bbox")?;
        non_null(roi, "roi")?;
        non_null(visibility, "visibility")?;
        let cams = &(*rig).cameras;
        if camera >= cams.len() {
            return Err(fail(
                StStatus::InvalidArgument,
                format!("camera {camera} out of range for {} cameras", cams.len()),
            ));
        }
        let a: [f64; 10] = std::slice::from_raw_parts(bbox, 10).try_into().expect("length 10");
        let rois = lift(project_box(&BoxState::from_array(a), cams))?;
        let r = &rois[camera];
        let rect = r.clipped.map_or([f64::NAN; 4], |c| [c.xmin, c.ymin, c.xmax, c.ymax]);
        ptr::copy_nonoverlapping(rect.as_ptr(), roi, 4);
        *visibility = match r.visibility {
            Visibility::Visible => StVisibility::Visible,
            Visibility::PartiallyVisible => StVisibility::PartiallyVisible,
            Visibility::BehindCamera => StVisibility::BehindCamera,
            Visibility::OutOfFrame => StVisibility::OutOfFrame,
        };
        Ok(())
    })
}

/// Runs the randomized geometry and cascade checks; `passed` is set to 1 or 0.
///
/// # Safety
/// `rig` must be a live handle and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn st_selfcheck(rig: *const StRig, seed: u64, passed: *mut i32) -> StStatus {
    guard(|| {
        non_null(rig, "rig")?;
        non_null(passed, "passed")?;
        let r = lift(geometry_selfcheck(&(*rig).cameras, seed))?;
        *passed = i32::from(r.passed);
        Ok(())
    })
}

/// One cascade refinement step. `delta` is
/// `[d_x, d_y, d_z, d_w, d_l, d_h, cos, sin, vx, vy]`.
///
/// # Safety
/// All three pointers must reference 10 doubles.
#[no_mangle]
pub unsafe extern "C" fn st_apply_adjustment(bbox: *const f64, delta: *const f64, out: *mut f64) -> StStatus {
    guard(|| {
        non_null(bbox, "bbox")?;
        non_null(delta, "delta")?;
        non_null(out, "out")?;
        let b: [f64; 10] = std::slice::from_raw_parts(bbox, 10).try_into().expect("length 10");
        let d = std::slice::from_raw_parts(delta, 10);
        let delta = BoxDelta {
            d_x: d[0],
            d_y: d[1],
            d_z: d[2],
            d_w: d[3],
            d_l: d[4],
            d_h: d[5],
            cos_yaw: d[6],
            sin_yaw: d[7],
            vx: d[8],
            vy: d[9],
        };
        let r = lift(apply_adjustment(&BoxState::from_array(b), &delta))?;
        ptr::copy_nonoverlapping(r.to_array().as_ptr(), out, 10);
        Ok(())
    })
}

/// Minimum-cost assignment on a row-major `rows x cols` matrix; `INFINITY`
/// marks forbidden cells. `row_to_col` (length `rows`) receives the column
/// of each row or -1.
///
/// # Safety
/// `costs` must hold `rows * cols` doubles, `row_to_col` `rows` values.
#[no_mangle]
pub unsafe extern "C" fn st_hungarian(
    costs: *const f64,
    rows: usize,
    cols: usize,
    row_to_col: *mut i64,
    total: *mut f64,
) -> StStatus {
    guard(|| {
        non_null(total, "total")?;
        let n = rows.checked_mul(cols).ok_or_else(|| fail(StStatus::InvalidArgument, "matrix too large"))?;
        let data = if n == 0 {
            Vec::new()
        } else {
            non_null(costs, "costs")?;
            std::slice::from_raw_parts(costs, n).to_vec()
        };
        let m = lift(CostMatrix::new(rows, cols, data))?;
        let a = lift(hungarian(&m))?;
        if rows > 0 {
            non_null(row_to_col, "row_to_col")?;
            for (r, c) in a.row_to_col(rows).into_iter().enumerate() {
                *row_to_col.add(r) = c.map_or(-1, |c| c as i64);
            }
        }
        *total = a.total;
        Ok(())
    })
}
