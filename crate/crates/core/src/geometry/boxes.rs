use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D bounding box in a right-handed, z-up world frame.
///
/// `l` runs along the heading, `w` is the lateral extent and `h` the vertical
/// one. Heading is carried as a (cos, sin) pair so that it can be regressed
/// without a wrap-around discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub cos_yaw: f64,
    pub sin_yaw: f64,
    pub vx: f64,
    pub vy: f64,
}

impl BoxState {
    pub fn new(center: [f64; 3], dims_wlh: [f64; 3], yaw: f64, velocity: [f64; 2]) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            w: dims_wlh[0],
            l: dims_wlh[1],
            h: dims_wlh[2],
            cos_yaw: yaw.cos(),
            sin_yaw: yaw.sin(),
            vx: velocity[0],
            vy: velocity[1],
        }
    }

    /// Serialized order: `[cx, cy, h, w, cz, l, cos, sin, vx, vy]`.
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.cx,
            self.cy,
            self.h,
            self.w,
            self.cz,
            self.l,
            self.cos_yaw,
            self.sin_yaw,
            self.vx,
            self.vy,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            cx: a[0],
            cy: a[1],
            h: a[2],
            w: a[3],
            cz: a[4],
            l: a[5],
            cos_yaw: a[6],
            sin_yaw: a[7],
            vx: a[8],
            vy: a[9],
        }
    }

    pub fn yaw(&self) -> f64 {
        self.sin_yaw.atan2(self.cos_yaw)
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(self.cx, self.cy, self.cz)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks finiteness, positive dimensions and a unit heading encoding.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid("box has a non-finite field"));
        }
        if !(self.w > 0.0 && self.l > 0.0 && self.h > 0.0) {
            return Err(Error::invalid(format!(
                "box dimensions must be positive, got w={} l={} h={}",
                self.w, self.l, self.h
            )));
        }
        let norm2 = self.cos_yaw * self.cos_yaw + self.sin_yaw * self.sin_yaw;
        if (norm2 - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "heading encoding is not unit length (|.|^2 = {norm2})"
            )));
        }
        Ok(())
    }
}

/// Eight box corners. Corner `k` has bits `(b2 b1 b0)` selecting the sign of
/// `(l/2, w/2, h/2)` in the box frame, a set bit meaning `+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners(pub [Point3<f64>; 8]);

impl Corners {
    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.0.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / 8.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3<f64>> {
        self.0.iter()
    }
}

pub fn decode_corners(b: &BoxState) -> Result<Corners> {
    if !b.is_finite() {
        return Err(Error::invalid("cannot decode corners of a non-finite box"));
    }
    let (c, s) = (b.cos_yaw, b.sin_yaw);
    let (hl, hw, hh) = (b.l / 2.0, b.w / 2.0, b.h / 2.0);
    let corners = std::array::from_fn(|k| {
        let sign = |bit: usize| if k & bit != 0 { 1.0 } else { -1.0 };
        let (x, y, z) = (sign(4) * hl, sign(2) * hw, sign(1) * hh);
        Point3::new(b.cx + c * x - s * y, b.cy + s * x + c * y, b.cz + z)
    });
    Ok(Corners(corners))
}
