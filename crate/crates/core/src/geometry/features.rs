use std::io::{Read, Write};

use super::roi::{ProjectedRoI, Rect, Visibility};
use crate::error::{Error, Result};

/// Default channel count of a feature map and of pooled RoI features.
pub const DEFAULT_CHANNELS: usize = 256;

/// Dense `height x width x channels` grid, stored row-major with the channel
/// index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("feature map dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "feature map of {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature map contains a non-finite value"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Reads the fixture format: `h, w, c` as little-endian `u32`, then
    /// `h*w*c` little-endian `f32` values in row-major order.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)?;
        let dim = |i: usize| {
            u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap()) as usize
        };
        let (h, w, c) = (dim(0), dim(1), dim(2));
        let mut raw = vec![0u8; h * w * c * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Self::new(h, w, c, data)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for d in [self.height, self.width, self.channels] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// torchvision-style bilinear lookup of channel `c` at continuous index
    /// coordinates; zero outside `[-1, size]`, edge-clamped inside it.
    fn bilinear(&self, mut y: f64, mut x: f64, out: &mut [f64], weight: f64) {
        let (h, w) = (self.height as f64, self.width as f64);
        if y < -1.0 || y > h || x < -1.0 || x > w {
            return;
        }
        y = y.max(0.0);
        x = x.max(0.0);
        let (mut y0, mut x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1);
        if y0 >= self.height - 1 {
            y0 = self.height - 1;
            y1 = y0;
            y = y0 as f64;
        } else {
            y1 = y0 + 1;
        }
        if x0 >= self.width - 1 {
            x0 = self.width - 1;
            x1 = x0;
            x = x0 as f64;
        } else {
            x1 = x0 + 1;
        }
        let (ly, lx) = (y - y0 as f64, x - x0 as f64);
        let (hy, hx) = (1.0 - ly, 1.0 - lx);
        let taps = [
            (hy * hx, self.at(y0, x0)),
            (hy * lx, self.at(y0, x1)),
            (ly * hx, self.at(y1, x0)),
            (ly * lx, self.at(y1, x1)),
        ];
        for (wt, vals) in taps {
            let wt = wt * weight;
            for (o, v) in out.iter_mut().zip(vals) {
                *o += wt * v;
            }
        }
    }
}

/// Pooled `out_h x out_w x channels` RoI features, channel index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledGrid {
    pub out_h: usize,
    pub out_w: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PooledGrid {
    pub fn zeros(out_h: usize, out_w: usize, channels: usize) -> Self {
        Self {
            out_h,
            out_w,
            channels,
            data: vec![0.0; out_h * out_w * channels],
        }
    }

    pub fn bin(&self, ph: usize, pw: usize) -> &[f64] {
        let start = (ph * self.out_w + pw) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.out_h, self.out_w, self.channels)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiAlignConfig {
    pub out_h: usize,
    pub out_w: usize,
    pub sampling_ratio: usize,
    /// Feature-map cells per image pixel.
    pub spatial_scale: f64,
}

impl Default for RoiAlignConfig {
    fn default() -> Self {
        Self {
            out_h: 7,
            out_w: 7,
            sampling_ratio: 2,
            spatial_scale: 1.0,
        }
    }
}

/// Continuous feature-grid coordinates of every bilinear sample used for
/// bin `(ph, pw)`, in `(y, x)` index space.
pub fn bin_sample_points(roi: &Rect, cfg: &RoiAlignConfig, ph: usize, pw: usize) -> Vec<(f64, f64)> {
    // aligned convention: cell (i, j) is centred at (i + 0.5, j + 0.5)
    let x1 = roi.xmin * cfg.spatial_scale - 0.5;
    let y1 = roi.ymin * cfg.spatial_scale - 0.5;
    let bin_w = roi.width() * cfg.spatial_scale / cfg.out_w as f64;
    let bin_h = roi.height() * cfg.spatial_scale / cfg.out_h as f64;
    let sr = cfg.sampling_ratio;
    let mut pts = Vec::with_capacity(sr * sr);
    for iy in 0..sr {
        let y = y1 + ph as f64 * bin_h + (iy as f64 + 0.5) * bin_h / sr as f64;
        for ix in 0..sr {
            let x = x1 + pw as f64 * bin_w + (ix as f64 + 0.5) * bin_w / sr as f64;
            pts.push((y, x));
        }
    }
    pts
}

/// RoI Align over the clipped rectangle of `roi`. RoIs without pixels pool to
/// an all-zero grid.
pub fn roi_align(fm: &FeatureMap, roi: &ProjectedRoI, cfg: &RoiAlignConfig) -> Result<PooledGrid> {
    if cfg.out_h == 0 || cfg.out_w == 0 || cfg.sampling_ratio == 0 {
        return Err(Error::invalid("RoI Align output size and sampling ratio must be >= 1"));
    }
    if !(cfg.spatial_scale.is_finite() && cfg.spatial_scale > 0.0) {
        return Err(Error::invalid("RoI Align spatial scale must be positive"));
    }
    let mut out = PooledGrid::zeros(cfg.out_h, cfg.out_w, fm.channels());
    let rect = match (roi.visibility.has_pixels(), roi.clipped) {
        (true, Some(r)) => r,
        _ => return Ok(out),
    };
    let weight = 1.0 / (cfg.sampling_ratio * cfg.sampling_ratio) as f64;
    let c = fm.channels();
    for ph in 0..cfg.out_h {
        for pw in 0..cfg.out_w {
            let start = (ph * cfg.out_w + pw) * c;
            let slot = &mut out.data[start..start + c];
            for (y, x) in bin_sample_points(&rect, cfg, ph, pw) {
                fm.bilinear(y, x, slot, weight);
            }
        }
    }
    Ok(out)
}

/// Element-wise mean over the views that have pixels. Summation runs in
/// camera-index order so the result does not depend on input order.
pub fn aggregate_views(
    pooled: &[(usize, PooledGrid)],
    visibility: &[Visibility],
    shape: (usize, usize, usize),
) -> Result<PooledGrid> {
    if pooled.len() != visibility.len() {
        return Err(Error::invalid(format!(
            "{} pooled grids but {} visibility flags",
            pooled.len(),
            visibility.len()
        )));
    }
    if let Some((cam, g)) = pooled.iter().find(|(_, g)| g.shape() != shape) {
        return Err(Error::invalid(format!(
            "pooled grid of camera {cam} has shape {:?}, expected {shape:?}",
            g.shape()
        )));
    }
    let mut views: Vec<(usize, &PooledGrid)> = pooled
        .iter()
        .zip(visibility)
        .filter(|(_, v)| v.has_pixels())
        .map(|((cam, g), _)| (*cam, g))
        .collect();
    views.sort_by_key(|(cam, _)| *cam);
    let mut out = PooledGrid::zeros(shape.0, shape.1, shape.2);
    if views.is_empty() {
        return Ok(out);
    }
    for (_, g) in &views {
        for (o, v) in out.data.iter_mut().zip(&g.data) {
            *o += v;
        }
    }
    let n = views.len() as f64;
    out.data.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visible(rect: Rect) -> ProjectedRoI {
        ProjectedRoI {
            camera_index: 0,
            bbox: Some(rect),
            visibility: Visibility::Visible,
            clipped: Some(rect),
        }
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let fm = FeatureMap::from_fn(20, 30, 3, |_, _, _| 2.5).unwrap();
        let roi = visible(Rect { xmin: 0.0, ymin: 0.0, xmax: 30.0, ymax: 20.0 });
        let cfg = RoiAlignConfig { out_h: 3, out_w: 5, ..Default::default() };
        let g = roi_align(&fm, &roi, &cfg).unwrap();
        assert!(g.data.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn ramp_matches_mean_sample_coordinate() {
        let fm = FeatureMap::from_fn(40, 40, 1, |_, x, _| x as f64).unwrap();
        let rect = Rect { xmin: 5.3, ymin: 7.1, xmax: 21.9, ymax: 19.4 };
        let cfg = RoiAlignConfig::default();
        let g = roi_align(&fm, &visible(rect), &cfg).unwrap();
        for ph in 0..7 {
            for pw in 0..7 {
                // sample x positions in index space, computed by hand from the
                // bin geometry rather than through bin_sample_points
                let bin_w = (21.9 - 5.3) / 7.0;
                let xs = [0.25, 0.75].map(|f| 5.3 - 0.5 + (pw as f64 + f) * bin_w);
                let want = (xs[0] + xs[1]) / 2.0;
                assert!((g.bin(ph, pw)[0] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hidden_roi_pools_to_zero() {
        let fm = FeatureMap::from_fn(4, 4, 2, |_, _, _| 1.0).unwrap();
        let roi = ProjectedRoI {
            camera_index: 0,
            bbox: None,
            visibility: Visibility::BehindCamera,
            clipped: None,
        };
        let g = roi_align(&fm, &roi, &RoiAlignConfig::default()).unwrap();
        assert_eq!(g.shape(), (7, 7, 2));
        assert!(g.is_zero());
    }

    #[test]
    fn samples_far_outside_grid_contribute_zero() {
        let fm = FeatureMap::from_fn(4, 4, 1, |_, _, _| 1.0).unwrap();
        let mut out = [0.0];
        fm.bilinear(-1.5, 2.0, &mut out, 1.0);
        fm.bilinear(2.0, 4.5, &mut out, 1.0);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn aggregate_means_visible_views() {
        let a = PooledGrid { out_h: 1, out_w: 2, channels: 1, data: vec![1.0, 2.0] };
        let b = PooledGrid { out_h: 1, out_w: 2, channels: 1, data: vec![3.0, 6.0] };
        let hidden = PooledGrid { out_h: 1, out_w: 2, channels: 1, data: vec![100.0, 100.0] };
        let vis = [Visibility::Visible, Visibility::PartiallyVisible, Visibility::OutOfFrame];
        let g = aggregate_views(&[(0, a.clone()), (1, b), (2, hidden)], &vis, (1, 2, 1)).unwrap();
        assert_eq!(g.data, vec![2.0, 4.0]);
        let single = aggregate_views(&[(0, a.clone())], &vis[..1], (1, 2, 1)).unwrap();
        assert_eq!(single, a);
        let none = aggregate_views(&[(0, a)], &[Visibility::BehindCamera], (1, 2, 1)).unwrap();
        assert!(none.is_zero());
    }

    #[test]
    fn aggregate_rejects_shape_mismatch() {
        let a = PooledGrid::zeros(1, 2, 1);
        let b = PooledGrid::zeros(2, 2, 1);
        let vis = [Visibility::Visible; 2];
        assert!(aggregate_views(&[(0, a), (1, b)], &vis, (1, 2, 1)).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let fm = FeatureMap::from_fn(3, 4, 2, |y, x, c| (y * 100 + x * 10 + c) as f64 * 0.5).unwrap();
        let mut buf = Vec::new();
        fm.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 3 * 4 * 2 * 4);
        assert_eq!(&buf[..4], &3u32.to_le_bytes());
        let back = FeatureMap::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let mut buf = Vec::new();
        FeatureMap::from_fn(2, 2, 1, |_, _, _| 1.0).unwrap().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(FeatureMap::read_from(buf.as_slice()).is_err());
    }
}
