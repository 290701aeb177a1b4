//! Box decoding, multi-camera projection, RoI classification and RoI Align
//! pooling with cross-view fusion.

mod boxes;
mod camera;
mod features;
mod roi;

pub use boxes::{decode_corners, BoxState, Corners};
pub use camera::{
    load_rig, parse_rig, project_corners, rig_to_json, synthetic_rig, CameraModel,
    ProjectedCorner, MIN_DEPTH,
};
pub use features::{
    aggregate_views, bin_sample_points, roi_align, FeatureMap, PooledGrid, RoiAlignConfig,
    DEFAULT_CHANNELS,
};
pub use roi::{roi_from_projection, ProjectedRoI, Rect, Visibility};

use crate::error::{Error, Result};

/// Pooling output size shared by every camera of a rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub out_h: usize,
    pub out_w: usize,
    pub sampling_ratio: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            out_h: 7,
            out_w: 7,
            sampling_ratio: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampledFeatures {
    pub fused: PooledGrid,
    pub rois: Vec<ProjectedRoI>,
}

/// Projects `b` into every camera and computes one RoI per camera.
pub fn project_box(b: &BoxState, rig: &[CameraModel]) -> Result<Vec<ProjectedRoI>> {
    let corners = decode_corners(b)?;
    Ok(rig
        .iter()
        .enumerate()
        .map(|(i, cam)| roi_from_projection(i, &project_corners(&corners, cam), cam))
        .collect())
}

/// Full sparse sampling for one box: corners, per-camera RoIs, RoI Align on
/// each camera's map and the cross-view mean.
///
/// The feature map of camera `i` is assumed to cover that camera's whole
/// image, so the pooling scale is `map width / image width`.
pub fn sample_box_features(
    b: &BoxState,
    rig: &[CameraModel],
    maps: &[FeatureMap],
    cfg: &SamplingConfig,
) -> Result<SampledFeatures> {
    if rig.len() != maps.len() {
        return Err(Error::invalid(format!(
            "{} cameras but {} feature maps",
            rig.len(),
            maps.len()
        )));
    }
    let channels = maps.first().map_or(DEFAULT_CHANNELS, FeatureMap::channels);
    if maps.iter().any(|m| m.channels() != channels) {
        return Err(Error::invalid("feature maps disagree on channel count"));
    }
    let rois = project_box(b, rig)?;
    let mut pooled = Vec::with_capacity(rig.len());
    for ((roi, cam), fm) in rois.iter().zip(rig).zip(maps) {
        let align = RoiAlignConfig {
            out_h: cfg.out_h,
            out_w: cfg.out_w,
            sampling_ratio: cfg.sampling_ratio,
            spatial_scale: fm.width() as f64 / cam.width as f64,
        };
        pooled.push((roi.camera_index, roi_align(fm, roi, &align)?));
    }
    let flags: Vec<Visibility> = rois.iter().map(|r| r.visibility).collect();
    let fused = aggregate_views(&pooled, &flags, (cfg.out_h, cfg.out_w, channels))?;
    Ok(SampledFeatures { fused, rois })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps_for(rig: &[CameraModel]) -> Vec<FeatureMap> {
        rig.iter()
            .enumerate()
            .map(|(i, _)| {
                FeatureMap::from_fn(18, 32, 4, |y, x, c| (i * 1000 + y * 37 + x * 3 + c) as f64)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn box_behind_every_camera() {
        // a single forward-looking camera; the box sits behind it
        let rig = vec![synthetic_rig().remove(0)];
        let b = BoxState::new([-20.0, 0.0, 1.0], [2.0, 4.0, 1.5], 0.0, [0.0; 2]);
        let s = sample_box_features(&b, &rig, &maps_for(&rig), &SamplingConfig::default()).unwrap();
        assert!(s.fused.is_zero());
        assert!(s.rois.iter().all(|r| r.visibility == Visibility::BehindCamera));
    }

    #[test]
    fn single_visible_camera_passes_through() {
        let rig = synthetic_rig();
        let maps = maps_for(&rig);
        let b = BoxState::new([25.0, 0.0, 1.0], [1.8, 4.2, 1.6], 0.2, [0.0; 2]);
        let cfg = SamplingConfig::default();
        let s = sample_box_features(&b, &rig, &maps, &cfg).unwrap();
        let seen: Vec<_> = s.rois.iter().filter(|r| r.visibility.has_pixels()).collect();
        assert_eq!(seen.len(), 1);
        let roi = seen[0];
        let cam = &rig[roi.camera_index];
        let align = RoiAlignConfig {
            out_h: 7,
            out_w: 7,
            sampling_ratio: 2,
            spatial_scale: 32.0 / cam.width as f64,
        };
        let direct = roi_align(&maps[roi.camera_index], roi, &align).unwrap();
        assert_eq!(s.fused, direct);
    }

    #[test]
    fn camera_and_map_counts_must_agree() {
        let rig = synthetic_rig();
        let b = BoxState::new([25.0, 0.0, 1.0], [1.8, 4.2, 1.6], 0.0, [0.0; 2]);
        let maps = maps_for(&rig[..2]);
        assert!(sample_box_features(&b, &rig, &maps, &SamplingConfig::default()).is_err());
    }
}
