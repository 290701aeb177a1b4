//! Multi-Bernoulli-mixture tracking with an unscented Kalman filter and a
//! hybrid box/appearance likelihood, plus a single-hypothesis baseline.

mod config;
mod deterministic;
mod likelihood;
mod mbm;
mod ukf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::assignment::murty_kbest;
pub use config::TrackerConfig;
pub use deterministic::DeterministicTracker;
pub use likelihood::{appearance_term, cosine_similarity, gate, gate_distance, hybrid_likelihood, within_gate};
pub use mbm::{extract_tracks, mbm_update, missed_existence, prune_and_cap, GlobalHypothesis, MbmState, Track};
pub use ukf::{
    gaussian_log_density, innovation, mahalanobis, ukf_predict, ukf_update, wrap_angle, BernoulliComponent, Innovation,
    KinematicState, Measurement,
};

use crate::error::{Error, Result};
use crate::geometry::BoxState;

/// Index of yaw in the state vector `[x, y, z, yaw, vx, vy]`.
pub const YAW: usize = 3;
pub const STATE_DIM: usize = 6;
pub const MEAS_DIM: usize = 6;

/// Measurements sharing one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub label: u64,
    pub bbox: BoxState,
    pub class_id: usize,
    pub score: f64,
}

/// Which appearance terms enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureUse {
    pub roi: bool,
    pub query: bool,
}

impl FeatureUse {
    pub const NONE: FeatureUse = FeatureUse { roi: false, query: false };
    pub const ROI: FeatureUse = FeatureUse { roi: true, query: false };
    pub const ALL: FeatureUse = FeatureUse { roi: true, query: true };
}

/// Association variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssociationMode {
    /// Deterministic single-hypothesis baseline.
    #[serde(rename = "de")]
    De,
    /// Probabilistic, box likelihood only.
    #[serde(rename = "pr")]
    Pr,
    /// Probabilistic with the RoI-feature term.
    #[serde(rename = "pr+r")]
    PrR,
    /// Probabilistic with both appearance terms.
    #[serde(rename = "pr+h")]
    PrH,
}

impl AssociationMode {
    pub const ALL: [AssociationMode; 4] = [Self::De, Self::Pr, Self::PrR, Self::PrH];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::De => "de",
            Self::Pr => "pr",
            Self::PrR => "pr+r",
            Self::PrH => "pr+h",
        }
    }

    pub fn features(self) -> FeatureUse {
        match self {
            Self::De | Self::Pr => FeatureUse::NONE,
            Self::PrR => FeatureUse::ROI,
            Self::PrH => FeatureUse::ALL,
        }
    }
}

impl fmt::Display for AssociationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssociationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown mode {s:?}; expected de, pr, pr+r or pr+h")))
    }
}

#[derive(Debug, Clone)]
enum Engine {
    De(DeterministicTracker),
    Mbm(MbmState),
}

/// Frame-by-frame tracker for any association mode.
#[derive(Debug, Clone)]
pub struct Tracker {
    mode: AssociationMode,
    cfg: TrackerConfig,
    engine: Engine,
}

impl Tracker {
    pub fn new(mode: AssociationMode, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let engine = match mode {
            AssociationMode::De => Engine::De(DeterministicTracker::new()),
            _ => Engine::Mbm(MbmState::new()),
        };
        Ok(Self { mode, cfg, engine })
    }

    pub fn mode(&self) -> AssociationMode {
        self.mode
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// The mixture posterior, `None` for the deterministic baseline.
    pub fn mbm_state(&self) -> Option<&MbmState> {
        match &self.engine {
            Engine::Mbm(s) => Some(s),
            Engine::De(_) => None,
        }
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Vec<TrackOutput>> {
        match &mut self.engine {
            Engine::De(de) => de.update(frame, &self.cfg),
            Engine::Mbm(state) => {
                mbm_update(state, frame, &self.cfg, self.mode.features())?;
                Ok(extract_tracks(state, &self.cfg))
            }
        }
    }
}
