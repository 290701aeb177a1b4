use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sparsetrack_ffi::*;

fn last_error() -> String {
    let p = st_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn car(x: f64, y: f64) -> [f64; 10] {
    // [cx, cy, h, w, cz, l, cos, sin, vx, vy]
    [x, y, 1.5, 2.0, 0.75, 4.0, 1.0, 0.0, 1.0, 0.0]
}

fn det(bbox: [f64; 10], feature: &[f64]) -> StDetection {
    StDetection {
        bbox,
        class_id: 0,
        score: 0.9,
        roi_feature: feature.as_ptr(),
        roi_len: feature.len(),
        query_feature: ptr::null(),
        query_len: 0,
    }
}

fn new_tracker(mode: &str) -> *mut StTracker {
    let mode = CString::new(mode).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { st_tracker_new(mode.as_ptr(), ptr::null(), &mut t) }, StStatus::Ok);
    t
}

#[test]
fn tracker_lifecycle() {
    for mode in ["de", "pr", "pr+r", "pr+h"] {
        let t = new_tracker(mode);
        let f = [1.0, 0.0, 0.0];
        let mut out = [StTrack { track_id: 0, bbox: [0.0; 10], class_id: 0, score: 0.0 }; 4];
        let mut n = 0usize;
        for k in 0..5 {
            let ts = k as f64 * 0.5;
            let dets = [det(car(ts, 0.0), &f), det(car(ts, 20.0), &f)];
            let s = unsafe { st_tracker_step(t, ts, dets.as_ptr(), dets.len(), out.as_mut_ptr(), out.len(), &mut n) };
            assert_eq!(s, StStatus::Ok, "{mode}");
            assert_eq!(n, 2, "{mode}");
        }
        // identities are stable
        assert_eq!((out[0].track_id, out[1].track_id), (0, 1));
        assert!((out[0].bbox[0] - 2.0).abs() < 1e-6);
        unsafe { st_tracker_free(t) };
    }
}

#[test]
fn small_buffer_keeps_the_frame() {
    let t = new_tracker("pr");
    let dets = [det(car(0.0, 0.0), &[]), det(car(0.0, 20.0), &[])];
    let mut one = [StTrack { track_id: 0, bbox: [0.0; 10], class_id: 0, score: 0.0 }; 1];
    let mut n = 0usize;
    let s = unsafe { st_tracker_step(t, 0.0, dets.as_ptr(), 2, one.as_mut_ptr(), 1, &mut n) };
    assert_eq!(s, StStatus::BufferTooSmall);
    assert_eq!(n, 2);
    let mut two = [StTrack { track_id: 0, bbox: [0.0; 10], class_id: 0, score: 0.0 }; 2];
    assert_eq!(unsafe { st_tracker_last_tracks(t, two.as_mut_ptr(), 2, &mut n) }, StStatus::Ok);
    assert_eq!(two[0], one[0]);
    unsafe { st_tracker_free(t) };
}

#[test]
fn errors_are_reported() {
    let mut t = ptr::null_mut();
    let bad = CString::new("greedy").unwrap();
    assert_eq!(unsafe { st_tracker_new(bad.as_ptr(), ptr::null(), &mut t) }, StStatus::InvalidInput);
    assert!(last_error().contains("greedy"));

    let mode = CString::new("pr").unwrap();
    let cfg = CString::new("p_detect = 2.0").unwrap();
    assert_eq!(unsafe { st_tracker_new(mode.as_ptr(), cfg.as_ptr(), &mut t) }, StStatus::Config);

    let t = new_tracker("pr");
    let mut n = 0;
    assert_eq!(unsafe { st_tracker_step(t, 1.0, ptr::null(), 0, ptr::null_mut(), 0, &mut n) }, StStatus::Ok);
    assert_eq!(unsafe { st_tracker_step(t, 0.5, ptr::null(), 0, ptr::null_mut(), 0, &mut n) }, StStatus::Sequencing);
    let mut b = car(0.0, 0.0);
    b[3] = -1.0;
    let d = [det(b, &[])];
    assert_eq!(unsafe { st_tracker_step(t, 2.0, d.as_ptr(), 1, ptr::null_mut(), 0, &mut n) }, StStatus::InvalidInput);
    assert_eq!(unsafe { st_tracker_step(ptr::null_mut(), 2.0, ptr::null(), 0, ptr::null_mut(), 0, &mut n) }, StStatus::NullPointer);
    unsafe { st_tracker_free(t) };
}

#[test]
fn rig_projection_and_selfcheck() {
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { st_rig_synthetic(&mut rig) }, StStatus::Ok);
    assert_eq!(unsafe { st_rig_camera_count(rig) }, 6);
    // straight ahead of the front camera
    let b = [20.0, 0.0, 1.5, 2.0, 0.75, 4.0, 1.0, 0.0, 0.0, 0.0];
    let mut roi = [0.0; 4];
    let mut vis = StVisibility::OutOfFrame;
    assert_eq!(unsafe { st_project_box(rig, b.as_ptr(), 0, roi.as_mut_ptr(), &mut vis) }, StStatus::Ok);
    assert_eq!(vis, StVisibility::Visible);
    assert!(roi[0] < 800.0 && roi[2] > 800.0);
    assert_eq!(unsafe { st_project_box(rig, b.as_ptr(), 3, roi.as_mut_ptr(), &mut vis) }, StStatus::Ok);
    assert_eq!(vis, StVisibility::BehindCamera);
    assert!(roi[0].is_nan());
    assert_eq!(unsafe { st_project_box(rig, b.as_ptr(), 6, roi.as_mut_ptr(), &mut vis) }, StStatus::InvalidArgument);
    let mut passed = 0;
    assert_eq!(unsafe { st_selfcheck(rig, 3, &mut passed) }, StStatus::Ok);
    assert_eq!(passed, 1);
    unsafe { st_rig_free(rig) };

    let missing = CString::new("/nonexistent/rig.json").unwrap();
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { st_rig_load(missing.as_ptr(), &mut rig) }, StStatus::Io);
    assert!(rig.is_null());
}

#[test]
fn adjustment_and_assignment() {
    let b = car(1.0, 2.0);
    let mut d = [0.0; 10];
    d[6] = 1.0;
    d[8] = 1.0;
    let mut out = [0.0; 10];
    assert_eq!(unsafe { st_apply_adjustment(b.as_ptr(), d.as_ptr(), out.as_mut_ptr()) }, StStatus::Ok);
    assert_eq!(out, b);
    d[3] = f64::NAN;
    assert_eq!(unsafe { st_apply_adjustment(b.as_ptr(), d.as_ptr(), out.as_mut_ptr()) }, StStatus::InvalidInput);

    let costs = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    let mut cols = [0i64; 3];
    let mut total = 0.0;
    assert_eq!(unsafe { st_hungarian(costs.as_ptr(), 3, 3, cols.as_mut_ptr(), &mut total) }, StStatus::Ok);
    assert_eq!(total, 5.0);
    assert_eq!(cols, [1, 0, 2]);
    let blocked = [f64::INFINITY, f64::INFINITY];
    assert_eq!(unsafe { st_hungarian(blocked.as_ptr(), 1, 2, cols.as_mut_ptr(), &mut total) }, StStatus::Infeasible);
}

#[test]
fn header_is_valid_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("sparsetrack.h");
    let text = std::fs::read_to_string(&header).expect("header generated by the build script");
    for name in ["st_tracker_new", "st_tracker_step", "st_rig_load", "st_hungarian", "StStatus"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(probe) = Command::new("cc").arg("--version").output() else { return };
    if !probe.status.success() {
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        "#include \"sparsetrack.h\"\nint main(void) { StTracker *t = 0; (void)t; return ST_STATUS_OK; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("sparsetrack-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
