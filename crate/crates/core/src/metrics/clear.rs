use std::collections::BTreeMap;

use super::{EvalObject, EvalSequence};
use crate::assignment::{hungarian_partial, CostMatrix};
use crate::error::{Error, Result};

/// Correspondence memory carried between frames of one sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchState {
    /// Ground-truth label -> track label matched in the previous frame.
    pub previous: BTreeMap<u64, u64>,
    /// Ground-truth label -> track label of its most recent match.
    pub last: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameEvents {
    /// `(gt label, track label, distance)` in ground-truth order.
    pub matches: Vec<(u64, u64, f64)>,
    pub false_positives: u64,
    pub misses: u64,
    pub id_switches: u64,
}

/// Matches one frame: previous correspondences that are still within the
/// gate are kept, the rest is solved as a gated assignment on BEV distance.
pub fn match_frame(
    gts: &[EvalObject],
    tracks: &[EvalObject],
    state: &mut MatchState,
    dist_threshold: f64,
) -> FrameEvents {
    let feasible = |g: &EvalObject, t: &EvalObject| {
        let d = g.bev_distance(t);
        (g.class == t.class && d <= dist_threshold).then_some(d)
    };
    let mut gt_match: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
    let mut track_taken = vec![false; tracks.len()];

    for (gi, g) in gts.iter().enumerate() {
        let Some(&tl) = state.previous.get(&g.label) else { continue };
        if let Some(ti) = tracks.iter().position(|t| t.label == tl) {
            if let Some(d) = feasible(g, &tracks[ti]) {
                gt_match[gi] = Some((ti, d));
                track_taken[ti] = true;
            }
        }
    }

    let free_g: Vec<usize> = (0..gts.len()).filter(|&i| gt_match[i].is_none()).collect();
    let free_t: Vec<usize> = (0..tracks.len()).filter(|&j| !track_taken[j]).collect();
    let mut costs = CostMatrix::filled(free_g.len(), free_t.len(), f64::INFINITY);
    for (r, &gi) in free_g.iter().enumerate() {
        for (c, &ti) in free_t.iter().enumerate() {
            if let Some(d) = feasible(&gts[gi], &tracks[ti]) {
                costs.set(r, c, d);
            }
        }
    }
    for (r, c) in hungarian_partial(&costs).pairs {
        let (gi, ti) = (free_g[r], free_t[c]);
        gt_match[gi] = Some((ti, costs.get(r, c)));
        track_taken[ti] = true;
    }

    let mut ev = FrameEvents::default();
    state.previous.clear();
    for (g, m) in gts.iter().zip(&gt_match) {
        match *m {
            None => ev.misses += 1,
            Some((ti, d)) => {
                let tl = tracks[ti].label;
                if state.last.get(&g.label).is_some_and(|&prev| prev != tl) {
                    ev.id_switches += 1;
                }
                state.last.insert(g.label, tl);
                state.previous.insert(g.label, tl);
                ev.matches.push((g.label, tl, d));
            }
        }
    }
    ev.false_positives = track_taken.iter().filter(|t| !**t).count() as u64;
    ev
}

/// Event totals over all frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClearCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub misses: u64,
    pub id_switches: u64,
    pub num_gt: u64,
    pub num_frames: u64,
    pub distance_sum: f64,
}

impl ClearCounts {
    pub fn mota(&self) -> Result<f64> {
        if self.num_gt == 0 {
            return Err(Error::UndefinedMetric("MOTA needs at least one ground-truth object".into()));
        }
        let errors = self.false_positives + self.misses + self.id_switches;
        Ok(1.0 - errors as f64 / self.num_gt as f64)
    }

    pub fn motp(&self) -> Option<f64> {
        (self.true_positives > 0).then(|| self.distance_sum / self.true_positives as f64)
    }

    pub fn recall(&self) -> f64 {
        if self.num_gt == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.num_gt as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let predicted = self.true_positives + self.false_positives;
        if predicted == 0 {
            0.0
        } else {
            self.true_positives as f64 / predicted as f64
        }
    }
}

pub(crate) fn accumulate(
    sequences: &[EvalSequence],
    dist_threshold: f64,
    min_score: Option<f64>,
) -> ClearCounts {
    let mut c = ClearCounts::default();
    for s in sequences {
        let mut state = MatchState::default();
        for f in &s.frames {
            let ev = match min_score {
                None => match_frame(&f.gt, &f.tracks, &mut state, dist_threshold),
                Some(th) => {
                    let kept: Vec<EvalObject> = f.tracks.iter().filter(|t| t.score >= th).cloned().collect();
                    match_frame(&f.gt, &kept, &mut state, dist_threshold)
                }
            };
            c.true_positives += ev.matches.len() as u64;
            c.distance_sum += ev.matches.iter().map(|m| m.2).sum::<f64>();
            c.false_positives += ev.false_positives;
            c.misses += ev.misses;
            c.id_switches += ev.id_switches;
            c.num_gt += f.gt.len() as u64;
            c.num_frames += 1;
        }
    }
    c
}

pub(crate) fn validate(sequences: &[EvalSequence], dist_threshold: f64) -> Result<()> {
    if !(dist_threshold.is_finite() && dist_threshold > 0.0) {
        return Err(Error::invalid(format!("distance threshold {dist_threshold} must be positive")));
    }
    for s in sequences {
        for f in &s.frames {
            f.validate()?;
        }
    }
    Ok(())
}

pub fn compute_mota_motp(sequences: &[EvalSequence], dist_threshold: f64) -> Result<ClearCounts> {
    validate(sequences, dist_threshold)?;
    if sequences.iter().all(|s| s.frames.is_empty()) {
        return Err(Error::invalid("evaluation needs at least one frame"));
    }
    let c = accumulate(sequences, dist_threshold, None);
    if c.num_gt == 0 {
        return Err(Error::UndefinedMetric("no ground-truth objects".into()));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn identical_tracks_are_all_true_positives() {
        let g = vec![obj(1, 0.0, 0.0), obj(2, 10.0, 0.0)];
        let ev = match_frame(&g, &g, &mut MatchState::default(), 2.0);
        assert_eq!(ev.matches.len(), 2);
        assert_eq!((ev.false_positives, ev.misses, ev.id_switches), (0, 0, 0));
    }

    #[test]
    fn lone_gt_is_a_miss() {
        let ev = match_frame(&[obj(1, 0.0, 0.0)], &[], &mut MatchState::default(), 2.0);
        assert_eq!((ev.misses, ev.false_positives), (1, 0));
    }

    #[test]
    fn ten_object_case() {
        // 10 gt over 2 frames; one gt is missed, one track is spurious
        let f1 = (0..5).map(|i| obj(i, i as f64 * 10.0, 0.0)).collect::<Vec<_>>();
        let f2 = f1.clone();
        let t1 = f1.clone();
        let mut t2: Vec<EvalObject> = f2[..4].to_vec();
        t2.push(obj(99, 100.0, 100.0));
        let c = compute_mota_motp(&seq(vec![(f1, t1), (f2, t2)]), 2.0).unwrap();
        assert_eq!((c.num_gt, c.misses, c.false_positives, c.id_switches), (10, 1, 1, 0));
        assert!((c.mota().unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(c.motp(), Some(0.0));
    }

    #[test]
    fn crossing_swap_counts_two_switches() {
        // the two tracks trade identities while far from their old objects
        let frames = vec![
            (vec![obj(1, 0.0, 0.0), obj(2, 10.0, 0.0)], vec![obj(7, 0.1, 0.0), obj(8, 10.1, 0.0)]),
            (vec![obj(1, 5.0, 1.0), obj(2, 5.0, -1.0)], vec![obj(7, 5.0, 1.2), obj(8, 5.0, -1.2)]),
            (vec![obj(1, 10.0, 0.0), obj(2, 0.0, 0.0)], vec![obj(8, 10.1, 0.0), obj(7, 0.1, 0.0)]),
        ];
        let s = seq(frames);
        let mut state = MatchState::default();
        let switches: Vec<u64> = s[0]
            .frames
            .iter()
            .map(|f| match_frame(&f.gt, &f.tracks, &mut state, 2.0).id_switches)
            .collect();
        assert_eq!(switches, vec![0, 0, 2]);
        let c = compute_mota_motp(&s, 2.0).unwrap();
        assert_eq!((c.id_switches, c.true_positives, c.false_positives, c.misses), (2, 6, 0, 0));
        assert!((c.mota().unwrap() - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn persistent_match_beats_closer_newcomer() {
        let mut state = MatchState::default();
        match_frame(&[obj(1, 0.0, 0.0)], &[obj(7, 1.5, 0.0)], &mut state, 2.0);
        let ev = match_frame(&[obj(1, 0.0, 0.0)], &[obj(7, 1.5, 0.0), obj(8, 0.0, 0.0)], &mut state, 2.0);
        assert_eq!(ev.matches, vec![(1, 7, 1.5)]);
        assert_eq!((ev.false_positives, ev.id_switches), (1, 0));
    }

    #[test]
    fn empty_output_scores_zero() {
        let s = seq(vec![(vec![obj(1, 0.0, 0.0), obj(2, 4.0, 0.0)], vec![])]);
        let c = compute_mota_motp(&s, 2.0).unwrap();
        assert_eq!(c.mota().unwrap(), 0.0);
        assert_eq!(c.motp(), None);
    }

    #[test]
    fn zero_ground_truth_is_undefined() {
        let s = seq(vec![(vec![], vec![obj(1, 0.0, 0.0)])]);
        assert!(matches!(compute_mota_motp(&s, 2.0), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn class_mismatch_never_matches() {
        let mut t = obj(7, 0.0, 0.0);
        t.class = "pedestrian".into();
        let ev = match_frame(&[obj(1, 0.0, 0.0)], &[t], &mut MatchState::default(), 2.0);
        assert_eq!((ev.misses, ev.false_positives), (1, 1));
    }
}
