use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::formats::{FrameRecord, ObjectRecord};
use crate::error::{Error, Result};
use crate::geometry::BoxState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    ConstantVelocity,
    Turning,
}

/// Synthetic scenario description. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub sequence_id: String,
    pub num_objects: usize,
    /// Object `i` follows `trajectory_kinds[i % len]`.
    pub trajectory_kinds: Vec<TrajectoryKind>,
    /// Hz.
    pub frame_rate: f64,
    /// Seconds.
    pub duration: f64,
    /// Initial positions and clutter are drawn from `[-area, area]^2`.
    pub area: f64,
    pub min_separation: f64,
    pub speed_range: [f64; 2],
    /// Absolute turn rate range in rad/s for turning objects.
    pub turn_rate_range: [f64; 2],
    pub position_noise: f64,
    pub height_noise: f64,
    pub yaw_noise: f64,
    pub velocity_noise: f64,
    pub dropout: f64,
    /// Mean clutter detections per frame.
    pub clutter_rate: f64,
    /// `0` disables appearance features.
    pub embedding_dim: usize,
    /// Norm of the perturbation added to an identity's latent embedding.
    pub embedding_noise: f64,
    pub class: String,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            sequence_id: "sim".into(),
            num_objects: 8,
            trajectory_kinds: vec![TrajectoryKind::ConstantVelocity, TrajectoryKind::Turning],
            frame_rate: 2.0,
            duration: 30.0,
            area: 50.0,
            min_separation: 8.0,
            speed_range: [1.0, 5.0],
            turn_rate_range: [0.05, 0.15],
            position_noise: 0.3,
            height_noise: 0.2,
            yaw_noise: 0.1,
            velocity_noise: 0.5,
            dropout: 0.3,
            clutter_rate: 2.0,
            embedding_dim: 32,
            embedding_noise: 0.2,
            class: "car".into(),
        }
    }
}

impl ScenarioSpec {
    /// Noise-free, drop-free, clutter-free constant-velocity scenario.
    pub fn noiseless() -> Self {
        Self {
            trajectory_kinds: vec![TrajectoryKind::ConstantVelocity],
            position_noise: 0.0,
            height_noise: 0.0,
            yaw_noise: 0.0,
            velocity_noise: 0.0,
            dropout: 0.0,
            clutter_rate: 0.0,
            embedding_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario spec serializes")
    }

    pub fn num_frames(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout = {} is not in [0, 1]", self.dropout));
        }
        let sigmas = [
            ("position_noise", self.position_noise),
            ("height_noise", self.height_noise),
            ("yaw_noise", self.yaw_noise),
            ("velocity_noise", self.velocity_noise),
            ("embedding_noise", self.embedding_noise),
            ("clutter_rate", self.clutter_rate),
            ("min_separation", self.min_separation),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [("frame_rate", self.frame_rate), ("duration", self.duration), ("area", self.area)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (name, r) in [("speed_range", self.speed_range), ("turn_rate_range", self.turn_rate_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
                return bad(format!("{name} must satisfy 0 <= min <= max"));
            }
        }
        if self.trajectory_kinds.is_empty() && self.num_objects > 0 {
            return bad("trajectory_kinds must not be empty".into());
        }
        if self.sequence_id.is_empty() || self.class.is_empty() {
            return bad("sequence_id and class must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Track-file frames with `track_id` = object identity.
    pub ground_truth: Vec<FrameRecord>,
    pub detections: Vec<FrameRecord>,
}

struct Object {
    x: f64,
    y: f64,
    z: f64,
    dims: [f64; 3],
    heading: f64,
    speed: f64,
    turn_rate: f64,
    embedding: Vec<f64>,
}

impl Object {
    fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }

    fn bbox(&self) -> BoxState {
        BoxState::new([self.x, self.y, self.z], self.dims, self.heading, self.velocity())
    }

    fn advance(&mut self, dt: f64) {
        if self.turn_rate == 0.0 {
            let [vx, vy] = self.velocity();
            self.x += vx * dt;
            self.y += vy * dt;
        } else {
            let r = self.speed / self.turn_rate;
            let h1 = self.heading + self.turn_rate * dt;
            self.x += r * (h1.sin() - self.heading.sin());
            self.y += r * (self.heading.cos() - h1.cos());
            self.heading = (h1 + PI).rem_euclid(2.0 * PI) - PI;
        }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    normalized((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

fn perturbed(rng: &mut ChaCha8Rng, latent: &[f64], noise: f64) -> Vec<f64> {
    let per = noise / (latent.len() as f64).sqrt();
    normalized(latent.iter().map(|x| x + per * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    sigma * rng.sample::<f64, _>(StandardNormal)
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / spec.frame_rate;

    let mut objects: Vec<Object> = Vec::with_capacity(spec.num_objects);
    for i in 0..spec.num_objects {
        let (mut x, mut y) = (0.0, 0.0);
        for _ in 0..1000 {
            x = rng.gen_range(-spec.area..=spec.area);
            y = rng.gen_range(-spec.area..=spec.area);
            if objects.iter().all(|o| (o.x - x).hypot(o.y - y) >= spec.min_separation) {
                break;
            }
        }
        let dims = [rng.gen_range(1.7..=2.1), rng.gen_range(3.8..=4.8), rng.gen_range(1.4..=1.8)];
        let turning = spec.trajectory_kinds[i % spec.trajectory_kinds.len()] == TrajectoryKind::Turning;
        let omega = rng.gen_range(spec.turn_rate_range[0]..=spec.turn_rate_range[1]);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        objects.push(Object {
            x,
            y,
            z: dims[2] / 2.0,
            dims,
            heading: rng.gen_range(-PI..PI),
            speed: rng.gen_range(spec.speed_range[0]..=spec.speed_range[1]),
            turn_rate: if turning { sign * omega } else { 0.0 },
            embedding: random_unit(&mut rng, spec.embedding_dim.max(1)),
        });
    }
    let features = spec.embedding_dim > 0;
    let clutter = (spec.clutter_rate > 0.0)
        .then(|| Poisson::new(spec.clutter_rate).map_err(|e| Error::Config(e.to_string())))
        .transpose()?;

    let mut ground_truth = Vec::with_capacity(spec.num_frames());
    let mut detections = Vec::with_capacity(spec.num_frames());
    for k in 0..spec.num_frames() {
        let timestamp = k as f64 * dt;
        if k > 0 {
            for o in &mut objects {
                o.advance(dt);
            }
        }
        let mut gt = Vec::with_capacity(objects.len());
        let mut dets = Vec::new();
        for (id, o) in objects.iter().enumerate() {
            let truth = o.bbox();
            gt.push(ObjectRecord {
                track_id: Some(id as u64),
                bbox: truth,
                class: spec.class.clone(),
                score: 1.0,
                roi_feature: None,
                query_feature: None,
            });
            if rng.gen::<f64>() < spec.dropout {
                continue;
            }
            let yaw = truth.yaw() + gauss(&mut rng, spec.yaw_noise);
            let noisy = BoxState::new(
                [
                    truth.cx + gauss(&mut rng, spec.position_noise),
                    truth.cy + gauss(&mut rng, spec.position_noise),
                    truth.cz + gauss(&mut rng, spec.height_noise),
                ],
                o.dims,
                yaw,
                [
                    truth.vx + gauss(&mut rng, spec.velocity_noise),
                    truth.vy + gauss(&mut rng, spec.velocity_noise),
                ],
            );
            // keep the exact truth when the noise is off
            let bbox = if spec.yaw_noise == 0.0 {
                BoxState { cos_yaw: truth.cos_yaw, sin_yaw: truth.sin_yaw, ..noisy }
            } else {
                noisy
            };
            let score = rng.gen_range(0.55..=0.95);
            let (roi_feature, query_feature) = if features {
                (
                    Some(perturbed(&mut rng, &o.embedding, spec.embedding_noise)),
                    Some(perturbed(&mut rng, &o.embedding, spec.embedding_noise)),
                )
            } else {
                (None, None)
            };
            dets.push(ObjectRecord {
                track_id: None,
                bbox,
                class: spec.class.clone(),
                score,
                roi_feature,
                query_feature,
            });
        }
        let n_clutter = clutter.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let bbox = BoxState::new(
                [
                    rng.gen_range(-spec.area..=spec.area),
                    rng.gen_range(-spec.area..=spec.area),
                    rng.gen_range(0.6..=1.0),
                ],
                [rng.gen_range(1.7..=2.1), rng.gen_range(3.8..=4.8), rng.gen_range(1.4..=1.8)],
                rng.gen_range(-PI..PI),
                [gauss(&mut rng, 1.0), gauss(&mut rng, 1.0)],
            );
            let score = rng.gen_range(0.05..=0.45);
            let (roi_feature, query_feature) = if features {
                (
                    Some(random_unit(&mut rng, spec.embedding_dim)),
                    Some(random_unit(&mut rng, spec.embedding_dim)),
                )
            } else {
                (None, None)
            };
            dets.push(ObjectRecord {
                track_id: None,
                bbox,
                class: spec.class.clone(),
                score,
                roi_feature,
                query_feature,
            });
        }
        // detection order must not reveal identity
        for i in (1..dets.len()).rev() {
            let j = rng.gen_range(0..=i);
            dets.swap(i, j);
        }
        ground_truth.push(FrameRecord {
            sequence_id: spec.sequence_id.clone(),
            timestamp,
            ego_pose: None,
            detections: gt,
        });
        detections.push(FrameRecord {
            sequence_id: spec.sequence_id.clone(),
            timestamp,
            ego_pose: None,
            detections: dets,
        });
    }
    Ok(Scenario { ground_truth, detections })
}
