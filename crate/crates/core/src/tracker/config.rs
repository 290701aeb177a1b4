use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use super::MEAS_DIM;
use crate::error::{Error, Result};

/// Every tunable of the tracker. Unlisted keys in a config file keep their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Weight of the RoI-feature cosine term in the hybrid likelihood.
    pub alpha: f64,
    /// Weight of the query-feature cosine term in the hybrid likelihood.
    pub beta: f64,
    pub p_detect: f64,
    pub p_survive: f64,
    /// Clutter intensity in measurement space.
    pub clutter_density: f64,
    /// Chi-square probability mass inside the validation gate.
    pub gate_probability: f64,
    /// Global hypothesis budget; `0` means unbounded.
    pub max_hypotheses: usize,
    /// Hypotheses lighter than this fraction of the heaviest are dropped.
    pub hypothesis_prune: f64,
    pub existence_prune: f64,
    pub extraction_threshold: f64,
    /// Birth existence is the detection score clamped to this range.
    pub birth_existence_range: [f64; 2],
    /// Per-second process noise variances for `[x, y, z, yaw, vx, vy]`.
    pub process_noise: [f64; 6],
    pub measurement_noise: [f64; 6],
    pub birth_covariance: [f64; 6],
    /// Sigma-point spread, prior-knowledge and secondary scaling of the
    /// unscented transform.
    pub ukf_spread: f64,
    pub ukf_prior: f64,
    pub ukf_kappa: f64,
    pub feature_decay: f64,
    /// Weight of a new measurement in the running box-size average.
    pub dims_smoothing: f64,
    /// Confirmed-track threshold of the deterministic baseline.
    pub de_min_hits: u32,
    /// Consecutive misses after which the deterministic baseline deletes a track.
    pub de_max_age: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            p_detect: 0.9,
            p_survive: 0.99,
            clutter_density: 1e-4,
            gate_probability: 0.95,
            max_hypotheses: 50,
            hypothesis_prune: 1e-3,
            existence_prune: 1e-2,
            extraction_threshold: 0.5,
            birth_existence_range: [0.05, 0.95],
            process_noise: [0.5, 0.5, 0.05, 0.2, 1.0, 1.0],
            measurement_noise: [0.09, 0.09, 0.04, 0.01, 0.25, 0.25],
            birth_covariance: [0.25, 0.25, 0.1, 0.05, 1.0, 1.0],
            ukf_spread: 1e-3,
            ukf_prior: 2.0,
            ukf_kappa: 0.0,
            feature_decay: 0.9,
            dims_smoothing: 0.3,
            de_min_hits: 3,
            de_max_age: 2,
        }
    }
}

impl TrackerConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("tracker config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_detect", self.p_detect),
            ("p_survive", self.p_survive),
            ("gate_probability", self.gate_probability),
            ("hypothesis_prune", self.hypothesis_prune),
            ("existence_prune", self.existence_prune),
            ("extraction_threshold", self.extraction_threshold),
            ("feature_decay", self.feature_decay),
            ("dims_smoothing", self.dims_smoothing),
            ("birth_existence_range[0]", self.birth_existence_range[0]),
            ("birth_existence_range[1]", self.birth_existence_range[1]),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.birth_existence_range[0] > self.birth_existence_range[1] {
            return Err(Error::Config("birth_existence_range is reversed".into()));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return Err(Error::Config("gate_probability must lie strictly inside (0, 1)".into()));
        }
        if !(self.clutter_density.is_finite() && self.clutter_density > 0.0) {
            return Err(Error::Config("clutter_density must be positive".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let diagonals = [
            ("process_noise", &self.process_noise),
            ("measurement_noise", &self.measurement_noise),
            ("birth_covariance", &self.birth_covariance),
        ];
        for (name, d) in diagonals {
            if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{name} entries must be finite and >= 0")));
            }
        }
        if self.measurement_noise.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("measurement_noise entries must be positive".into()));
        }
        if !(self.ukf_spread > 0.0 && self.ukf_spread.is_finite()) {
            return Err(Error::Config("ukf_spread must be positive".into()));
        }
        let lambda_plus_n = self.ukf_spread.powi(2) * (6.0 + self.ukf_kappa);
        if lambda_plus_n <= 0.0 {
            return Err(Error::Config("ukf_kappa makes the sigma-point scale non-positive".into()));
        }
        Ok(())
    }

    /// Squared Mahalanobis gate radius for the measurement dimension.
    pub fn gate_threshold(&self) -> f64 {
        let chi2 = ChiSquared::new(MEAS_DIM as f64).expect("positive degrees of freedom");
        // the library quantile is a coarse bisection; polish it with Newton steps
        let mut x = chi2.inverse_cdf(self.gate_probability);
        for _ in 0..8 {
            let step = (chi2.cdf(x) - self.gate_probability) / chi2.pdf(x);
            if !step.is_finite() {
                break;
            }
            x -= step;
            if step.abs() <= 1e-15 * x {
                break;
            }
        }
        x
    }

    pub fn hypothesis_budget(&self) -> Option<usize> {
        (self.max_hypotheses > 0).then_some(self.max_hypotheses)
    }
}
