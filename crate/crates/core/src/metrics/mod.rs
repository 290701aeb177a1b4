//! CLEAR-MOT and recall-averaged tracking metrics on bird's-eye-view center
//! distance.

mod amota;
mod clear;

pub use amota::{compute_amota, recall_targets, AmotaReport, DEFAULT_RECALL_POINTS};
pub use clear::{compute_mota_motp, match_frame, ClearCounts, FrameEvents, MatchState};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxState;

/// Default BEV matching gate in meters.
pub const DEFAULT_DIST_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalObject {
    pub label: u64,
    pub bbox: BoxState,
    pub class: String,
    /// Ignored for ground truth.
    pub score: f64,
}

impl EvalObject {
    pub fn bev_distance(&self, other: &EvalObject) -> f64 {
        (self.bbox.cx - other.bbox.cx).hypot(self.bbox.cy - other.bbox.cy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub timestamp: f64,
    pub gt: Vec<EvalObject>,
    pub tracks: Vec<EvalObject>,
}

impl EvalFrame {
    pub fn validate(&self) -> Result<()> {
        for (what, list) in [("ground-truth", &self.gt), ("track", &self.tracks)] {
            let mut seen = BTreeSet::new();
            for o in list {
                if !seen.insert(o.label) {
                    return Err(Error::invalid(format!(
                        "duplicate {what} label {} at t={}",
                        o.label, self.timestamp
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Frames of one sequence in time order; matching state never crosses
/// sequence boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSequence {
    pub id: String,
    pub frames: Vec<EvalFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    /// Mean BEV distance over true positives; `None` without any.
    pub motp: Option<f64>,
    pub recall: f64,
    pub precision: f64,
    pub id_switches: u64,
    pub false_positives: u64,
    pub misses: u64,
    pub true_positives: u64,
    pub num_gt: u64,
    pub num_frames: u64,
    pub amota: f64,
    pub amotp: f64,
    pub dist_threshold: f64,
}

/// Full report: CLEAR-MOT totals at every score plus the recall-averaged
/// variants.
pub fn evaluate(sequences: &[EvalSequence], dist_threshold: f64) -> Result<MotReport> {
    let clear = compute_mota_motp(sequences, dist_threshold)?;
    let am = compute_amota(sequences, dist_threshold, DEFAULT_RECALL_POINTS)?;
    Ok(MotReport {
        mota: clear.mota()?,
        motp: clear.motp(),
        recall: clear.recall(),
        precision: clear.precision(),
        id_switches: clear.id_switches,
        false_positives: clear.false_positives,
        misses: clear.misses,
        true_positives: clear.true_positives,
        num_gt: clear.num_gt,
        num_frames: clear.num_frames,
        amota: am.amota,
        amotp: am.amotp,
        dist_threshold,
    })
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn duplicate_labels_rejected() {
        let s = seq(vec![(vec![obj(1, 0.0, 0.0), obj(1, 5.0, 0.0)], vec![])]);
        assert!(evaluate(&s, 2.0).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let s = seq(vec![(vec![obj(1, 0.0, 0.0)], vec![obj(9, 0.5, 0.0)])]);
        let r = evaluate(&s, 2.0).unwrap();
        let back: MotReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.motp, Some(0.5));
    }
}
