use serde::{Deserialize, Serialize};

use super::camera::{CameraModel, ProjectedCorner};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    /// Intersection with positive area, if any.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            xmin: self.xmin.max(other.xmin),
            ymin: self.ymin.max(other.ymin),
            xmax: self.xmax.min(other.xmax),
            ymax: self.ymax.min(other.ymax),
        };
        (r.xmin < r.xmax && r.ymin < r.ymax).then_some(r)
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.xmin >= self.xmin
            && other.ymin >= self.ymin
            && other.xmax <= self.xmax
            && other.ymax <= self.ymax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    PartiallyVisible,
    BehindCamera,
    OutOfFrame,
}

impl Visibility {
    pub fn has_pixels(self) -> bool {
        matches!(self, Visibility::Visible | Visibility::PartiallyVisible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedRoI {
    pub camera_index: usize,
    /// Min/max over the projected corners; `None` unless every corner is in
    /// front of the camera.
    pub bbox: Option<Rect>,
    pub visibility: Visibility,
    /// `bbox` clipped to the image; `None` for `BehindCamera`/`OutOfFrame`.
    pub clipped: Option<Rect>,
}

pub fn roi_from_projection(
    camera_index: usize,
    projected: &[ProjectedCorner; 8],
    cam: &CameraModel,
) -> ProjectedRoI {
    let n_front = projected.iter().filter(|p| p.projectable).count();
    if n_front == 0 {
        return ProjectedRoI {
            camera_index,
            bbox: None,
            visibility: Visibility::BehindCamera,
            clipped: None,
        };
    }
    if n_front < 8 {
        // a corner behind the image plane makes the perspective extremes unusable
        return ProjectedRoI {
            camera_index,
            bbox: None,
            visibility: Visibility::OutOfFrame,
            clipped: None,
        };
    }
    let bbox = projected.iter().fold(
        Rect {
            xmin: f64::INFINITY,
            ymin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymax: f64::NEG_INFINITY,
        },
        |r, p| Rect {
            xmin: r.xmin.min(p.u),
            ymin: r.ymin.min(p.v),
            xmax: r.xmax.max(p.u),
            ymax: r.ymax.max(p.v),
        },
    );
    let image = Rect {
        xmin: 0.0,
        ymin: 0.0,
        xmax: cam.width as f64,
        ymax: cam.height as f64,
    };
    let (visibility, clipped) = if image.contains(&bbox) {
        (Visibility::Visible, Some(bbox))
    } else {
        match bbox.intersect(&image) {
            Some(c) => (Visibility::PartiallyVisible, Some(c)),
            None => (Visibility::OutOfFrame, None),
        }
    };
    ProjectedRoI {
        camera_index,
        bbox: Some(bbox),
        visibility,
        clipped,
    }
}
