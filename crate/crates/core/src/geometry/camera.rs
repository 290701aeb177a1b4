use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::boxes::Corners;
use crate::error::{Error, Result};

/// Minimum camera-frame depth (meters) for perspective division.
pub const MIN_DEPTH: f64 = 1e-6;

/// A pinhole camera: intrinsics, world-to-camera extrinsics and image bounds.
///
/// Camera frame convention: x right, y down, z along the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub name: String,
    pub intrinsic: Matrix3<f64>,
    pub extrinsic: Matrix4<f64>,
    pub width: u32,
    pub height: u32,
}

/// One corner after projection. `u`, `v` are only meaningful when
/// `projectable` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedCorner {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub projectable: bool,
}

impl CameraModel {
    pub fn new(
        name: impl Into<String>,
        intrinsic: Matrix3<f64>,
        extrinsic: Matrix4<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam = Self {
            name: name.into(),
            intrinsic,
            extrinsic,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera mounted at `position` looking along world heading `heading`
    /// (radians about z), optical axis horizontal.
    pub fn looking_along(
        name: impl Into<String>,
        position: Point3<f64>,
        heading: f64,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let (c, s) = (heading.cos(), heading.sin());
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let forward = Vector3::new(c, s, 0.0);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * position.coords);
        let mut extrinsic = Matrix4::identity();
        extrinsic.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        extrinsic.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let intrinsic = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self {
            name: name.into(),
            intrinsic,
            extrinsic,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Camera {
            camera: self.name.clone(),
            reason,
        };
        if self.width == 0 || self.height == 0 {
            return Err(fail(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.intrinsic.iter().chain(self.extrinsic.iter()).any(|v| !v.is_finite()) {
            return Err(fail("non-finite matrix entry".into()));
        }
        let k = &self.intrinsic;
        if k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(fail("intrinsic last row must be [0, 0, 1]".into()));
        }
        let e = &self.extrinsic;
        if e.row(3) != Vector4::new(0.0, 0.0, 0.0, 1.0).transpose() {
            return Err(fail("extrinsic last row must be [0, 0, 0, 1]".into()));
        }
        let rot = self.rotation();
        let err = (rot.transpose() * rot - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return Err(fail(format!(
                "extrinsic rotation is not orthonormal (max deviation {err:.3e})"
            )));
        }
        let det = rot.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(fail(format!("extrinsic rotation has determinant {det}")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.extrinsic.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// The composed 3x4 world-to-pixel map `K [R | t]`.
    pub fn projection(&self) -> Matrix3x4<f64> {
        self.intrinsic * self.extrinsic.fixed_view::<3, 4>(0, 0)
    }

    pub fn project_point(&self, p: &Point3<f64>) -> ProjectedCorner {
        project_with(&self.projection(), p)
    }
}

fn project_with(t: &Matrix3x4<f64>, p: &Point3<f64>) -> ProjectedCorner {
    let h = t * p.to_homogeneous();
    let depth = h.z;
    if depth > MIN_DEPTH {
        ProjectedCorner {
            u: h.x / depth,
            v: h.y / depth,
            depth,
            projectable: true,
        }
    } else {
        ProjectedCorner {
            u: f64::NAN,
            v: f64::NAN,
            depth,
            projectable: false,
        }
    }
}

pub fn project_corners(corners: &Corners, cam: &CameraModel) -> [ProjectedCorner; 8] {
    let t = cam.projection();
    std::array::from_fn(|k| project_with(&t, &corners.0[k]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRecord {
    name: String,
    intrinsic: Vec<f64>,
    extrinsic: Vec<f64>,
    width: u32,
    height: u32,
}

impl From<&CameraModel> for CameraRecord {
    fn from(c: &CameraModel) -> Self {
        // nalgebra is column-major; the file is row-major
        Self {
            name: c.name.clone(),
            intrinsic: c.intrinsic.transpose().iter().copied().collect(),
            extrinsic: c.extrinsic.transpose().iter().copied().collect(),
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<CameraRecord> for CameraModel {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        let fail = |reason: String| Error::Camera {
            camera: r.name.clone(),
            reason,
        };
        if r.intrinsic.len() != 9 {
            return Err(fail(format!("intrinsic needs 9 numbers, got {}", r.intrinsic.len())));
        }
        if r.extrinsic.len() != 16 {
            return Err(fail(format!("extrinsic needs 16 numbers, got {}", r.extrinsic.len())));
        }
        CameraModel::new(
            r.name.clone(),
            Matrix3::from_row_slice(&r.intrinsic),
            Matrix4::from_row_slice(&r.extrinsic),
            r.width,
            r.height,
        )
    }
}

pub fn parse_rig(json: &str) -> Result<Vec<CameraModel>> {
    let records: Vec<CameraRecord> =
        serde_json::from_str(json).map_err(|e| Error::invalid(format!("camera rig: {e}")))?;
    records.into_iter().map(CameraModel::try_from).collect()
}

pub fn load_rig(path: &Path) -> Result<Vec<CameraModel>> {
    parse_rig(&std::fs::read_to_string(path)?)
}

pub fn rig_to_json(rig: &[CameraModel]) -> String {
    let records: Vec<CameraRecord> = rig.iter().map(CameraRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}

/// Six outward-facing cameras spaced 60 degrees apart on a mast at the
/// origin, 1600x900 pixels with a ~65 degree horizontal field of view, so
/// adjacent views overlap.
pub fn synthetic_rig() -> Vec<CameraModel> {
    const NAMES: [&str; 6] = [
        "CAM_FRONT",
        "CAM_FRONT_LEFT",
        "CAM_BACK_LEFT",
        "CAM_BACK",
        "CAM_BACK_RIGHT",
        "CAM_FRONT_RIGHT",
    ];
    NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let heading = (i as f64) * std::f64::consts::FRAC_PI_3;
            CameraModel::looking_along(*name, Point3::new(0.0, 0.0, 1.5), heading, 1260.0, 1600, 900)
        })
        .collect()
}
