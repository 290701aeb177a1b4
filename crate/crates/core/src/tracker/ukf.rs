use std::f64::consts::{PI, TAU};

use nalgebra::{Cholesky, Matrix6, Vector6};

use super::config::TrackerConfig;
use super::YAW;
use crate::error::{Error, Result};
use crate::geometry::BoxState;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Difference of two state-like vectors with the yaw entry wrapped.
fn diff(a: &Vector6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let mut d = a - b;
    d[YAW] = wrap_angle(d[YAW]);
    d
}

/// Per-object kinematics `[x, y, z, yaw, vx, vy]` plus a running box size.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
    /// Smoothed `(w, l, h)`.
    pub dims: [f64; 3],
}

impl KinematicState {
    pub fn to_box(&self) -> BoxState {
        let m = &self.mean;
        BoxState::new([m[0], m[1], m[2]], self.dims, m[YAW], [m[4], m[5]])
    }
}

/// One detection converted to the tracker's measurement space.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub z: Vector6<f64>,
    pub dims: [f64; 3],
    pub class_id: usize,
    pub score: f64,
    pub roi_feature: Option<Vec<f64>>,
    pub query_feature: Option<Vec<f64>>,
}

impl Measurement {
    pub fn from_box(b: &BoxState, class_id: usize, score: f64) -> Self {
        Self {
            z: Vector6::new(b.cx, b.cy, b.cz, wrap_angle(b.yaw()), b.vx, b.vy),
            dims: [b.w, b.l, b.h],
            class_id,
            score,
            roi_feature: None,
            query_feature: None,
        }
    }
}

/// A single potential object: existence probability, kinematics and the
/// appearance memory used by the hybrid likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliComponent {
    pub existence: f64,
    pub state: KinematicState,
    pub label: u64,
    pub roi_memory: Option<Vec<f64>>,
    pub query_memory: Option<Vec<f64>>,
    pub hits: u32,
    /// Consecutive missed detections.
    pub misses: u32,
    pub class_id: usize,
    pub score: f64,
}

impl BernoulliComponent {
    pub fn from_measurement(z: &Measurement, label: u64, existence: f64, cfg: &TrackerConfig) -> Self {
        Self {
            existence,
            state: KinematicState {
                mean: z.z,
                cov: Matrix6::from_diagonal(&Vector6::from(cfg.birth_covariance)),
                dims: z.dims,
            },
            label,
            roi_memory: z.roi_feature.as_deref().and_then(unit),
            query_memory: z.query_feature.as_deref().and_then(unit),
            hits: 1,
            misses: 0,
            class_id: z.class_id,
            score: z.score,
        }
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

fn blend_memory(memory: &Option<Vec<f64>>, obs: &Option<Vec<f64>>, decay: f64) -> Option<Vec<f64>> {
    match (memory, obs.as_deref().and_then(unit)) {
        (Some(m), Some(o)) if m.len() == o.len() => {
            let mixed: Vec<f64> = m.iter().zip(&o).map(|(a, b)| decay * a + (1.0 - decay) * b).collect();
            unit(&mixed).or_else(|| Some(o))
        }
        (_, Some(o)) => Some(o),
        (m, None) => m.clone(),
    }
}

/// Unscented-transform weights and sigma-point scale for a 6-D state.
struct SigmaWeights {
    scale: f64,
    wm0: f64,
    wc0: f64,
    wi: f64,
}

impl SigmaWeights {
    fn new(cfg: &TrackerConfig) -> Self {
        let n = 6.0;
        let a2 = cfg.ukf_spread * cfg.ukf_spread;
        let lambda = a2 * (n + cfg.ukf_kappa) - n;
        let wm0 = lambda / (n + lambda);
        Self {
            scale: (n + lambda).sqrt(),
            wm0,
            wc0: wm0 + (1.0 - a2 + cfg.ukf_prior),
            wi: 1.0 / (2.0 * (n + lambda)),
        }
    }

    fn wm(&self, i: usize) -> f64 {
        if i == 0 {
            self.wm0
        } else {
            self.wi
        }
    }

    fn wc(&self, i: usize) -> f64 {
        if i == 0 {
            self.wc0
        } else {
            self.wi
        }
    }
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

/// Lower Cholesky factor, adding escalating diagonal jitter when the matrix
/// is only positive semi-definite up to round-off.
fn robust_cholesky(p: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let p = symmetrize(p);
    if let Some(c) = Cholesky::new(p) {
        return Ok(c.l());
    }
    let base = p.diagonal().amax().max(1e-12);
    for exp in [-12, -10, -8] {
        let jitter = base * 10f64.powi(exp);
        if let Some(c) = Cholesky::new(p + Matrix6::identity() * jitter) {
            return Ok(c.l());
        }
    }
    Err(Error::Numerical("covariance is not positive semi-definite".into()))
}

fn sigma_points(mean: &Vector6<f64>, cov: &Matrix6<f64>, w: &SigmaWeights) -> Result<[Vector6<f64>; 13]> {
    let l = robust_cholesky(cov)? * w.scale;
    Ok(std::array::from_fn(|i| match i {
        0 => *mean,
        i if i <= 6 => mean + l.column(i - 1),
        i => mean - l.column(i - 7),
    }))
}

/// Weighted mean, accumulated as offsets from the first point so that the
/// large negative centre weight does not cancel catastrophically.
fn weighted_mean(pts: &[Vector6<f64>; 13], w: &SigmaWeights) -> Vector6<f64> {
    let mut acc = Vector6::zeros();
    for (i, p) in pts.iter().enumerate().skip(1) {
        acc += diff(p, &pts[0]) * w.wm(i);
    }
    let mut m = pts[0] + acc;
    m[YAW] = wrap_angle(m[YAW]);
    m
}

fn motion(x: &Vector6<f64>, dt: f64) -> Vector6<f64> {
    let mut y = *x;
    y[0] += x[4] * dt;
    y[1] += x[5] * dt;
    y
}

/// Time update: existence scaled by survival, kinematics through the
/// constant-velocity model via the unscented transform.
pub fn ukf_predict(comp: &BernoulliComponent, dt: f64, cfg: &TrackerConfig) -> Result<BernoulliComponent> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("prediction interval {dt} must be >= 0")));
    }
    let w = SigmaWeights::new(cfg);
    let pts = sigma_points(&comp.state.mean, &comp.state.cov, &w)?;
    let moved = pts.map(|p| motion(&p, dt));
    let mean = weighted_mean(&moved, &w);
    let mut cov = Matrix6::from_diagonal(&(Vector6::from(cfg.process_noise) * dt));
    for (i, p) in moved.iter().enumerate() {
        let d = diff(p, &mean);
        cov += d * d.transpose() * w.wc(i);
    }
    let cov = symmetrize(&cov);
    robust_cholesky(&cov)?;
    let mut out = comp.clone();
    out.existence = cfg.p_survive * comp.existence;
    out.state.mean = mean;
    out.state.cov = cov;
    Ok(out)
}

/// Predicted measurement statistics of a component against one measurement.
#[derive(Debug, Clone)]
pub struct Innovation {
    /// `z - z_pred` with yaw wrapped.
    pub residual: Vector6<f64>,
    pub cov: Matrix6<f64>,
    cross_cov: Matrix6<f64>,
}

pub fn innovation(comp: &BernoulliComponent, z: &Measurement, cfg: &TrackerConfig) -> Result<Innovation> {
    let w = SigmaWeights::new(cfg);
    let pts = sigma_points(&comp.state.mean, &comp.state.cov, &w)?;
    // the measurement model observes the full state
    let z_pred = weighted_mean(&pts, &w);
    let x_mean = z_pred;
    let mut s = Matrix6::from_diagonal(&Vector6::from(cfg.measurement_noise));
    let mut pxz = Matrix6::zeros();
    for (i, p) in pts.iter().enumerate() {
        let dz = diff(p, &z_pred);
        let dx = diff(p, &x_mean);
        s += dz * dz.transpose() * w.wc(i);
        pxz += dx * dz.transpose() * w.wc(i);
    }
    Ok(Innovation {
        residual: diff(&z.z, &z_pred),
        cov: symmetrize(&s),
        cross_cov: pxz,
    })
}

/// `sqrt(nu^T S^-1 nu)`.
pub fn mahalanobis(residual: &Vector6<f64>, s: &Matrix6<f64>) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    Ok(residual.dot(&chol.solve(residual)).max(0.0).sqrt())
}

/// Gaussian log-density of the residual under `N(0, S)`.
pub fn gaussian_log_density(residual: &Vector6<f64>, s: &Matrix6<f64>) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    let maha2 = residual.dot(&chol.solve(residual));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (maha2 + 6.0 * (TAU).ln() + log_det))
}

/// Measurement update. Returns the updated component (existence untouched;
/// the hypothesis layer decides it) and the Gaussian log-likelihood of the
/// measurement.
pub fn ukf_update(
    comp: &BernoulliComponent,
    z: &Measurement,
    cfg: &TrackerConfig,
) -> Result<(BernoulliComponent, f64)> {
    let inn = innovation(comp, z, cfg)?;
    let chol = Cholesky::new(inn.cov)
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    // K = Pxz S^-1  <=>  S K^T = Pxz^T
    let gain = chol.solve(&inn.cross_cov.transpose()).transpose();
    let mut mean = comp.state.mean + gain * inn.residual;
    mean[YAW] = wrap_angle(mean[YAW]);
    let cov = symmetrize(&(comp.state.cov - gain * inn.cov * gain.transpose()));
    let log_lik = gaussian_log_density(&inn.residual, &inn.cov)?;

    let a = cfg.dims_smoothing;
    let mut out = comp.clone();
    out.state.mean = mean;
    out.state.cov = cov;
    out.state.dims = std::array::from_fn(|k| (1.0 - a) * comp.state.dims[k] + a * z.dims[k]);
    out.roi_memory = blend_memory(&comp.roi_memory, &z.roi_feature, cfg.feature_decay);
    out.query_memory = blend_memory(&comp.query_memory, &z.query_feature, cfg.feature_decay);
    out.hits += 1;
    out.misses = 0;
    out.score = z.score;
    Ok((out, log_lik))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(mean: [f64; 6], var: f64) -> BernoulliComponent {
        BernoulliComponent {
            existence: 0.8,
            state: KinematicState {
                mean: Vector6::from(mean),
                cov: Matrix6::identity() * var,
                dims: [2.0, 4.0, 1.5],
            },
            label: 1,
            roi_memory: None,
            query_memory: None,
            hits: 1,
            misses: 0,
            class_id: 0,
            score: 0.9,
        }
    }

    #[test]
    fn wrap_rule() {
        assert!((wrap_angle(TAU - 0.1) + 0.1).abs() < 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_prediction_matches_linear_propagation() {
        let cfg = TrackerConfig { process_noise: [0.0; 6], ..Default::default() };
        let mut c = comp([0.0, 0.0, 0.0, 0.0, 1.0, 0.0], 0.0);
        c.state.cov = Matrix6::identity();
        c.state.cov[(0, 4)] = 0.3;
        c.state.cov[(4, 0)] = 0.3;
        let dt = 0.5;
        let p = ukf_predict(&c, dt, &cfg).unwrap();
        assert!((p.state.mean[0] - 0.5).abs() < 1e-9);
        let want_xx = 1.0 + 2.0 * dt * 0.3 + dt * dt * 1.0;
        assert!((p.state.cov[(0, 0)] - want_xx).abs() < 1e-9);
        assert!((p.state.cov[(1, 1)] - (1.0 + dt * dt)).abs() < 1e-9);
        assert!((p.state.cov[(2, 2)] - 1.0).abs() < 1e-9);
        assert!((p.existence - 0.8 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn zero_interval_only_scales_existence() {
        let cfg = TrackerConfig::default();
        let c = comp([1.0, 2.0, 0.0, 0.3, 1.0, -1.0], 0.5);
        let p = ukf_predict(&c, 0.0, &cfg).unwrap();
        assert!((p.state.mean - c.state.mean).amax() < 1e-9);
        assert!((p.state.cov - c.state.cov).amax() < 1e-9);
        assert_eq!(p.existence, 0.8 * cfg.p_survive);
        let mut dead = c.clone();
        dead.existence = 0.0;
        assert_eq!(ukf_predict(&dead, 0.5, &cfg).unwrap().existence, 0.0);
    }

    #[test]
    fn update_at_predicted_mean_keeps_mean() {
        let cfg = TrackerConfig::default();
        let c = comp([3.0, -1.0, 0.2, 0.4, 2.0, 0.0], 0.5);
        let z = Measurement {
            z: c.state.mean,
            ..Measurement::from_box(&c.state.to_box(), 0, 0.9)
        };
        let (u, ll) = ukf_update(&c, &z, &cfg).unwrap();
        assert!((u.state.mean - c.state.mean).amax() < 1e-9);
        let inn = innovation(&c, &z, &cfg).unwrap();
        let mode = -0.5 * (6.0 * TAU.ln() + inn.cov.determinant().ln());
        assert!((ll - mode).abs() < 1e-9);
        assert_eq!(u.hits, 2);
    }

    #[test]
    fn yaw_residual_wraps() {
        let cfg = TrackerConfig::default();
        let c = comp([0.0, 0.0, 0.0, 0.05, 0.0, 0.0], 0.1);
        let mut z = Measurement::from_box(&c.state.to_box(), 0, 0.9);
        z.z[YAW] = 0.05 + TAU - 0.1;
        let inn = innovation(&c, &z, &cfg).unwrap();
        assert!((inn.residual[YAW] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn mahalanobis_hand_values() {
        let i = Matrix6::identity();
        assert!((mahalanobis(&Vector6::new(3.0, 4.0, 0.0, 0.0, 0.0, 0.0), &i).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(mahalanobis(&Vector6::zeros(), &i).unwrap(), 0.0);
        let mut s = Matrix6::identity();
        s[(2, 2)] = 4.0;
        let nu = Vector6::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0);
        assert!((mahalanobis(&nu, &s).unwrap() - 1.0).abs() < 1e-12);
        assert!(mahalanobis(&nu, &Matrix6::zeros()).is_err());
    }

    #[test]
    fn feature_memory_stays_unit() {
        let cfg = TrackerConfig::default();
        let mut c = comp([0.0; 6], 0.5);
        c.roi_memory = Some(vec![1.0, 0.0, 0.0]);
        let mut z = Measurement::from_box(&c.state.to_box(), 0, 0.9);
        z.roi_feature = Some(vec![0.0, 5.0, 0.0]);
        let (u, _) = ukf_update(&c, &z, &cfg).unwrap();
        let m = u.roi_memory.unwrap();
        let n: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(m[0] > m[1]);
        assert!(u.query_memory.is_none());
    }
}
