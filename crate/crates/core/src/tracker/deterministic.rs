use super::config::TrackerConfig;
use super::likelihood::gate_distance;
use super::ukf::{ukf_predict, ukf_update, BernoulliComponent};
use super::{Frame, TrackOutput};
use crate::assignment::{hungarian_partial, CostMatrix};
use crate::error::{Error, Result};

/// Single-hypothesis baseline: one Hungarian assignment per frame on gated
/// Mahalanobis distance, tracks confirmed by hit count and deleted after too
/// many consecutive misses.
#[derive(Debug, Clone, Default)]
pub struct DeterministicTracker {
    pub tracks: Vec<BernoulliComponent>,
    next_label: u64,
    frame_count: u32,
    last_timestamp: Option<f64>,
}

impl DeterministicTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, frame: &Frame, cfg: &TrackerConfig) -> Result<Vec<TrackOutput>> {
        let dt = match self.last_timestamp {
            Some(prev) if !(frame.timestamp > prev) => {
                return Err(Error::Sequencing {
                    previous: prev,
                    got: frame.timestamp,
                })
            }
            Some(prev) => frame.timestamp - prev,
            None => 0.0,
        };
        self.last_timestamp = Some(frame.timestamp);
        self.frame_count += 1;

        for t in &mut self.tracks {
            let mut p = ukf_predict(t, dt, cfg)?;
            p.existence = 1.0;
            *t = p;
        }

        let gate = cfg.gate_threshold().sqrt();
        let meas = &frame.measurements;
        let mut costs = CostMatrix::filled(self.tracks.len(), meas.len(), f64::INFINITY);
        for (i, t) in self.tracks.iter().enumerate() {
            for (j, z) in meas.iter().enumerate() {
                if z.class_id != t.class_id {
                    continue;
                }
                let d = gate_distance(t, z, cfg)?;
                if d <= gate {
                    costs.set(i, j, d);
                }
            }
        }
        let matching = hungarian_partial(&costs);
        let mut matched_track = vec![false; self.tracks.len()];
        let mut matched_meas = vec![false; meas.len()];
        for &(i, j) in &matching.pairs {
            let (mut updated, _) = ukf_update(&self.tracks[i], &meas[j], cfg)?;
            updated.existence = 1.0;
            self.tracks[i] = updated;
            matched_track[i] = true;
            matched_meas[j] = true;
        }
        for (t, matched) in self.tracks.iter_mut().zip(&matched_track) {
            if !matched {
                t.misses += 1;
            }
        }
        self.tracks.retain(|t| t.misses <= cfg.de_max_age);
        for (z, matched) in meas.iter().zip(&matched_meas) {
            if !matched {
                let label = self.next_label;
                self.next_label += 1;
                self.tracks.push(BernoulliComponent::from_measurement(z, label, 1.0, cfg));
            }
        }

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.misses == 0 && (t.hits >= cfg.de_min_hits || self.frame_count <= cfg.de_min_hits))
            .map(|t| TrackOutput {
                label: t.label,
                bbox: t.state.to_box(),
                class_id: t.class_id,
                score: t.score,
            })
            .collect())
    }
}
