//! Box normalization over the detection region and the per-stage box
//! adjustment applied by a cascade refinement head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxState;

/// Stage count used when none is configured.
pub const DEFAULT_STAGES: usize = 6;
pub const MAX_STAGES: usize = 6;

/// Per-stage refinement output for one query box.
///
/// Position offsets are in units of the box dimensions, dimension offsets are
/// log-scale factors, and heading/velocity replace the box's values outright.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
    pub d_w: f64,
    pub d_l: f64,
    pub d_h: f64,
    pub cos_yaw: f64,
    pub sin_yaw: f64,
    pub vx: f64,
    pub vy: f64,
}

impl BoxDelta {
    /// A delta that leaves `b` unchanged.
    pub fn identity_for(b: &BoxState) -> Self {
        Self {
            cos_yaw: b.cos_yaw,
            sin_yaw: b.sin_yaw,
            vx: b.vx,
            vy: b.vy,
            ..Default::default()
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.d_x, self.d_y, self.d_z, self.d_w, self.d_l, self.d_h, self.cos_yaw,
            self.sin_yaw, self.vx, self.vy,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRegion {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
}

impl Default for DetectionRegion {
    fn default() -> Self {
        Self {
            x_range: [-61.2, 61.2],
            y_range: [-61.2, 61.2],
            z_range: [-5.0, 3.0],
        }
    }
}

impl DetectionRegion {
    pub fn validate(&self) -> Result<()> {
        for (axis, r) in ["x", "y", "z"].iter().zip([self.x_range, self.y_range, self.z_range]) {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::invalid(format!(
                    "detection region {axis} range [{}, {}] is empty",
                    r[0], r[1]
                )));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        (self.x_range[1] - self.x_range[0])
            * (self.y_range[1] - self.y_range[0])
            * (self.z_range[1] - self.z_range[0])
    }
}

fn unit_heading(cos: f64, sin: f64) -> (f64, f64) {
    let n = cos.hypot(sin);
    if n <= 1e-12 {
        (1.0, 0.0)
    } else if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        // already unit up to round-off; dividing would only perturb it
        (cos, sin)
    } else {
        (cos / n, sin / n)
    }
}

/// One refinement step. The heading pair is renormalized; a degenerate pair
/// falls back to yaw 0.
pub fn apply_adjustment(b: &BoxState, d: &BoxDelta) -> Result<BoxState> {
    if !d.is_finite() {
        return Err(Error::invalid("box delta has a non-finite field"));
    }
    let (cos_yaw, sin_yaw) = unit_heading(d.cos_yaw, d.sin_yaw);
    let out = BoxState {
        cx: d.d_x * b.w + b.cx,
        cy: d.d_y * b.l + b.cy,
        cz: d.d_z * b.h + b.cz,
        w: d.d_w.exp() * b.w,
        l: d.d_l.exp() * b.l,
        h: d.d_h.exp() * b.h,
        cos_yaw,
        sin_yaw,
        vx: d.vx,
        vy: d.vy,
    };
    let checks = [
        ("cx", out.cx),
        ("cy", out.cy),
        ("cz", out.cz),
        ("w", out.w),
        ("l", out.l),
        ("h", out.h),
    ];
    for (field, v) in checks {
        if !v.is_finite() {
            return Err(Error::Adjustment { field });
        }
    }
    // exp underflow can zero a dimension even for a finite delta
    for (field, v) in [("w", out.w), ("l", out.l), ("h", out.h)] {
        if v <= 0.0 {
            return Err(Error::Adjustment { field });
        }
    }
    Ok(out)
}

pub fn normalize_box(b: &BoxState, region: &DetectionRegion) -> BoxState {
    let n = |v: f64, r: [f64; 2]| (v - r[0]) / (r[1] - r[0]);
    BoxState {
        cx: n(b.cx, region.x_range),
        cy: n(b.cy, region.y_range),
        cz: n(b.cz, region.z_range),
        ..*b
    }
}

pub fn denormalize_box(b: &BoxState, region: &DetectionRegion) -> BoxState {
    let d = |v: f64, r: [f64; 2]| v * (r[1] - r[0]) + r[0];
    BoxState {
        cx: d(b.cx, region.x_range),
        cy: d(b.cy, region.y_range),
        cz: d(b.cz, region.z_range),
        ..*b
    }
}

/// Applies `stages[t][i]` to box `i` for every stage `t` in order and returns
/// the final-stage boxes. Delta `i` only ever touches box `i`.
pub fn run_cascade(initial: &[BoxState], stages: &[Vec<BoxDelta>]) -> Result<Vec<BoxState>> {
    if stages.is_empty() || stages.len() > MAX_STAGES {
        return Err(Error::invalid(format!(
            "cascade needs 1..={MAX_STAGES} stages, got {}",
            stages.len()
        )));
    }
    if let Some((t, s)) = stages.iter().enumerate().find(|(_, s)| s.len() != initial.len()) {
        return Err(Error::invalid(format!(
            "stage {t} has {} deltas for {} boxes",
            s.len(),
            initial.len()
        )));
    }
    let mut boxes = initial.to_vec();
    for stage in stages {
        for (b, d) in boxes.iter_mut().zip(stage) {
            *b = apply_adjustment(b, d)?;
        }
    }
    Ok(boxes)
}

/// Query boxes with uniform random centers in `region`, dims
/// `(l, w, h) = (4.0, 2.0, 1.5)`, yaw 0 and zero velocity.
pub fn random_query_boxes(n: usize, region: &DetectionRegion, rng: &mut impl Rng) -> Vec<BoxState> {
    (0..n)
        .map(|_| {
            let c = [
                rng.gen_range(region.x_range[0]..region.x_range[1]),
                rng.gen_range(region.y_range[0]..region.y_range[1]),
                rng.gen_range(region.z_range[0]..region.z_range[1]),
            ];
            BoxState::new(c, [2.0, 4.0, 1.5], 0.0, [0.0; 2])
        })
        .collect()
}
