use std::collections::BTreeMap;

use super::config::TrackerConfig;
use super::likelihood::{appearance_term, gate_distance, hybrid_likelihood};
use super::ukf::{ukf_predict, ukf_update, BernoulliComponent};
use super::{FeatureUse, Frame, TrackOutput};
use crate::assignment::{murty_kbest, CostMatrix};
use crate::error::{Error, Result};

/// All single-target hypotheses ever spawned for one object label that are
/// still referenced by some global hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub label: u64,
    pub hypotheses: Vec<BernoulliComponent>,
}

/// One consistent association history: for every track (by position in
/// [`MbmState::tracks`]) the selected single-target hypothesis, or `None`
/// when the object is not part of this hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalHypothesis {
    pub weight: f64,
    pub log_weight: f64,
    pub selection: Vec<Option<usize>>,
}

/// Multi-Bernoulli mixture posterior.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MbmState {
    pub tracks: Vec<Track>,
    /// Sorted by decreasing weight.
    pub hypotheses: Vec<GlobalHypothesis>,
    next_label: u64,
    last_timestamp: Option<f64>,
}

impl MbmState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state with one hypothesis holding every component.
    pub fn with_components(components: Vec<BernoulliComponent>, timestamp: f64) -> Self {
        let next_label = components.iter().map(|c| c.label + 1).max().unwrap_or(0);
        let selection = vec![Some(0); components.len()];
        let tracks = components
            .into_iter()
            .map(|c| Track {
                label: c.label,
                hypotheses: vec![c],
            })
            .collect();
        Self {
            tracks,
            hypotheses: vec![GlobalHypothesis {
                weight: 1.0,
                log_weight: 0.0,
                selection,
            }],
            next_label,
            last_timestamp: Some(timestamp),
        }
    }

    pub fn next_label(&self) -> u64 {
        self.next_label
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_timestamp
    }

    /// Components of the heaviest hypothesis.
    pub fn best_components(&self) -> Vec<&BernoulliComponent> {
        match self.hypotheses.first() {
            None => Vec::new(),
            Some(h) => h
                .selection
                .iter()
                .enumerate()
                .filter_map(|(t, s)| s.map(|i| &self.tracks[t].hypotheses[i]))
                .collect(),
        }
    }
}

/// Outcome of one single-target hypothesis in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Outcome {
    Missed,
    Detected(usize),
}

/// Missed-detection existence update.
pub fn missed_existence(r: f64, p_detect: f64) -> f64 {
    let denom = 1.0 - r * p_detect;
    if denom <= 0.0 {
        0.0
    } else {
        r * (1.0 - p_detect) / denom
    }
}

fn birth_existence(score: f64, cfg: &TrackerConfig) -> f64 {
    score.clamp(cfg.birth_existence_range[0], cfg.birth_existence_range[1])
}

/// Detected-branch likelihood of one measurement for one predicted component.
struct Detection {
    updated: BernoulliComponent,
    likelihood: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One full predict/associate/update cycle of the mixture.
pub fn mbm_update(state: &mut MbmState, frame: &Frame, cfg: &TrackerConfig, features: FeatureUse) -> Result<()> {
    let dt = match state.last_timestamp {
        Some(prev) if !(frame.timestamp > prev) => {
            return Err(Error::Sequencing {
                previous: prev,
                got: frame.timestamp,
            })
        }
        Some(prev) => frame.timestamp - prev,
        None => 0.0,
    };
    state.last_timestamp = Some(frame.timestamp);
    if state.hypotheses.is_empty() {
        state.hypotheses.push(GlobalHypothesis {
            weight: 1.0,
            log_weight: 0.0,
            selection: vec![None; state.tracks.len()],
        });
    }

    // (a) prediction
    for track in &mut state.tracks {
        for comp in &mut track.hypotheses {
            *comp = ukf_predict(comp, dt, cfg)?;
        }
    }

    // detected-branch likelihoods for every (track, hypothesis, measurement)
    let gate = cfg.gate_threshold().sqrt();
    let meas = &frame.measurements;
    let mut detections: Vec<Vec<Vec<Option<Detection>>>> = Vec::with_capacity(state.tracks.len());
    for track in &state.tracks {
        let mut per_sth = Vec::with_capacity(track.hypotheses.len());
        for comp in &track.hypotheses {
            let mut row = Vec::with_capacity(meas.len());
            for z in meas {
                if z.class_id != comp.class_id || gate_distance(comp, z, cfg)? > gate {
                    row.push(None);
                    continue;
                }
                let (updated, l_box) = ukf_update(comp, z, cfg)?;
                let l_roi = features
                    .roi
                    .then(|| appearance_term(&comp.roi_memory, &z.roi_feature))
                    .flatten();
                let l_prop = features
                    .query
                    .then(|| appearance_term(&comp.query_memory, &z.query_feature))
                    .flatten();
                row.push(Some(Detection {
                    updated,
                    likelihood: hybrid_likelihood(l_box, l_roi, l_prop, cfg),
                }));
            }
            per_sth.push(row);
        }
        detections.push(per_sth);
    }

    let n_old = state.tracks.len();
    let log_clutter = cfg.clutter_density.ln();
    let mut new_tracks: Vec<Track> = state
        .tracks
        .iter()
        .map(|t| Track {
            label: t.label,
            hypotheses: Vec::new(),
        })
        .collect();
    for z in meas {
        let label = state.next_label;
        state.next_label += 1;
        let existence = birth_existence(z.score, cfg);
        new_tracks.push(Track {
            label,
            hypotheses: vec![BernoulliComponent::from_measurement(z, label, existence, cfg)],
        });
    }
    // child index per (track, parent hypothesis, outcome)
    let mut children: Vec<BTreeMap<(usize, Outcome), usize>> = vec![BTreeMap::new(); n_old];
    let mut child_index = |t: usize, h: usize, outcome: Outcome, new_tracks: &mut Vec<Track>| -> usize {
        *children[t].entry((h, outcome)).or_insert_with(|| {
            let parent = &state.tracks[t].hypotheses[h];
            let child = match outcome {
                Outcome::Missed => {
                    let mut c = parent.clone();
                    c.existence = missed_existence(parent.existence, cfg.p_detect);
                    c.misses += 1;
                    c
                }
                Outcome::Detected(j) => {
                    let mut c = detections[t][h][j]
                        .as_ref()
                        .expect("only gated pairs are assigned")
                        .updated
                        .clone();
                    c.existence = 1.0;
                    c
                }
            };
            new_tracks[t].hypotheses.push(child);
            new_tracks[t].hypotheses.len() - 1
        })
    };

    let budget = cfg.hypothesis_budget();
    let mut next: Vec<GlobalHypothesis> = Vec::new();
    for parent in &state.hypotheses {
        // (b) association costs relative to "every measurement is new"
        let present: Vec<(usize, usize)> = parent
            .selection
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.map(|h| (t, h)))
            .collect();
        let (n, m) = (present.len(), meas.len());
        let mut costs = CostMatrix::filled(n, m + n, f64::INFINITY);
        for (row, &(t, h)) in present.iter().enumerate() {
            let r = state.tracks[t].hypotheses[h].existence;
            let log_detect = (r * cfg.p_detect).ln();
            for j in 0..m {
                if let Some(d) = &detections[t][h][j] {
                    let c = -(log_detect + d.likelihood) + log_clutter;
                    if c.is_finite() {
                        costs.set(row, j, c);
                    }
                }
            }
            let miss = -(1.0 - r * cfg.p_detect).ln();
            if miss.is_finite() {
                costs.set(row, m + row, miss);
            }
        }

        // (c) ranked associations within this parent's budget
        let k = match budget {
            None => usize::MAX,
            Some(kmax) => ((kmax as f64 * parent.weight).ceil() as usize).max(1),
        };
        let ranked = if n == 0 {
            vec![crate::assignment::Assignment {
                pairs: Vec::new(),
                total: 0.0,
            }]
        } else {
            murty_kbest(&costs, k)?
        };

        // (d) spawn children
        for a in ranked {
            let mut selection = vec![None; n_old + m];
            let mut used = vec![false; m];
            for &(row, col) in &a.pairs {
                let (t, h) = present[row];
                let outcome = if col < m {
                    used[col] = true;
                    Outcome::Detected(col)
                } else {
                    Outcome::Missed
                };
                selection[t] = Some(child_index(t, h, outcome, &mut new_tracks));
            }
            for (j, u) in used.iter().enumerate() {
                if !u {
                    selection[n_old + j] = Some(0);
                }
            }
            // (e) weight update
            next.push(GlobalHypothesis {
                weight: 0.0,
                log_weight: parent.log_weight - a.total,
                selection,
            });
        }
    }

    state.tracks = new_tracks;
    state.hypotheses = next;
    normalize(&mut state.hypotheses);
    // (f)
    prune_and_cap(state, cfg);
    Ok(())
}

/// Normalizes in the log domain and orders hypotheses by decreasing weight
/// (ties by selection vector).
fn normalize(hyps: &mut [GlobalHypothesis]) {
    let total = log_sum_exp(hyps.iter().map(|h| h.log_weight));
    for h in hyps.iter_mut() {
        h.log_weight -= total;
        h.weight = h.log_weight.exp();
    }
    hyps.sort_by(|a, b| {
        b.log_weight
            .total_cmp(&a.log_weight)
            .then_with(|| a.selection.cmp(&b.selection))
    });
}

/// Drops non-existent components from hypotheses, merges duplicates, prunes
/// light hypotheses, caps the count and garbage-collects unreferenced
/// single-target hypotheses and tracks.
pub fn prune_and_cap(state: &mut MbmState, cfg: &TrackerConfig) {
    if state.hypotheses.is_empty() {
        return;
    }
    let mut merged: BTreeMap<Vec<Option<usize>>, f64> = BTreeMap::new();
    let mut changed = false;
    for h in &state.hypotheses {
        let mut sel = h.selection.clone();
        for (t, s) in sel.iter_mut().enumerate() {
            if let Some(i) = *s {
                if state.tracks[t].hypotheses[i].existence < cfg.existence_prune {
                    *s = None;
                    changed = true;
                }
            }
        }
        let slot = merged.entry(sel).or_insert(f64::NEG_INFINITY);
        *slot = log_sum_exp([*slot, h.log_weight].into_iter());
    }
    let mut hyps: Vec<GlobalHypothesis> = if changed {
        merged
            .into_iter()
            .map(|(selection, log_weight)| GlobalHypothesis {
                weight: 0.0,
                log_weight,
                selection,
            })
            .collect()
    } else {
        std::mem::take(&mut state.hypotheses)
    };
    normalize(&mut hyps);

    let max_log = hyps[0].log_weight;
    let threshold = if cfg.hypothesis_prune > 0.0 {
        max_log + cfg.hypothesis_prune.ln()
    } else {
        f64::NEG_INFINITY
    };
    hyps.retain(|h| h.log_weight >= threshold);
    if let Some(k) = cfg.hypothesis_budget() {
        hyps.truncate(k);
    }
    normalize(&mut hyps);

    // garbage-collect and re-index
    let n_tracks = state.tracks.len();
    let mut remap: Vec<Vec<Option<usize>>> = state
        .tracks
        .iter()
        .map(|t| vec![None; t.hypotheses.len()])
        .collect();
    let mut kept: Vec<Vec<BernoulliComponent>> = vec![Vec::new(); n_tracks];
    for h in &hyps {
        for (t, s) in h.selection.iter().enumerate() {
            if let Some(i) = *s {
                if remap[t][i].is_none() {
                    remap[t][i] = Some(kept[t].len());
                    kept[t].push(state.tracks[t].hypotheses[i].clone());
                }
            }
        }
    }
    let live: Vec<usize> = (0..n_tracks).filter(|&t| !kept[t].is_empty()).collect();
    for h in &mut hyps {
        h.selection = live
            .iter()
            .map(|&t| h.selection[t].map(|i| remap[t][i].expect("referenced")))
            .collect();
    }
    let mut kept = kept.into_iter().map(Some).collect::<Vec<_>>();
    state.tracks = live
        .iter()
        .map(|&t| Track {
            label: state.tracks[t].label,
            hypotheses: kept[t].take().expect("live track"),
        })
        .collect();
    state.hypotheses = hyps;
}

/// Report components of the heaviest hypothesis whose existence clears the
/// extraction threshold.
pub fn extract_tracks(state: &MbmState, cfg: &TrackerConfig) -> Vec<TrackOutput> {
    state
        .best_components()
        .into_iter()
        .filter(|c| c.existence >= cfg.extraction_threshold)
        .map(|c| TrackOutput {
            label: c.label,
            bbox: c.state.to_box(),
            class_id: c.class_id,
            score: c.existence * c.score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxState;
    use crate::tracker::ukf::{KinematicState, Measurement};
    use nalgebra::{Matrix6, Vector6};

    fn component(label: u64, r: f64, mean: [f64; 6]) -> BernoulliComponent {
        BernoulliComponent {
            existence: r,
            state: KinematicState {
                mean: Vector6::from(mean),
                cov: Matrix6::identity() * 0.2,
                dims: [2.0, 4.0, 1.5],
            },
            label,
            roi_memory: None,
            query_memory: None,
            hits: 1,
            misses: 0,
            class_id: 0,
            score: 0.9,
        }
    }

    fn frame(t: f64, boxes: &[BoxState]) -> Frame {
        Frame {
            timestamp: t,
            measurements: boxes.iter().map(|b| Measurement::from_box(b, 0, 0.9)).collect(),
        }
    }

    fn weight_sum(s: &MbmState) -> f64 {
        s.hypotheses.iter().map(|h| h.weight).sum()
    }

    #[test]
    fn empty_frame_applies_missed_detection_identity() {
        let cfg = TrackerConfig { p_survive: 1.0, ..Default::default() };
        let mut s = MbmState::with_components(vec![component(0, 0.5, [0.0; 6])], 0.0);
        mbm_update(&mut s, &frame(0.5, &[]), &cfg, FeatureUse::NONE).unwrap();
        let r = s.best_components()[0].existence;
        assert!((r - 0.05 / 0.55).abs() < 1e-12);
        assert!((r - 0.0909).abs() < 1e-4);
    }

    #[test]
    fn measurement_at_prediction_is_associated() {
        let cfg = TrackerConfig { max_hypotheses: 1, ..Default::default() };
        let c = component(7, 0.9, [5.0, 5.0, 0.0, 0.0, 1.0, 0.0]);
        let mut s = MbmState::with_components(vec![c.clone()], 0.0);
        let predicted = ukf_predict(&c, 0.5, &cfg).unwrap();
        let z = predicted.state.to_box();
        mbm_update(&mut s, &frame(0.5, &[z]), &cfg, FeatureUse::NONE).unwrap();
        assert_eq!(s.hypotheses.len(), 1);
        let best = s.best_components();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].label, 7);
        assert_eq!(best[0].existence, 1.0);
    }

    #[test]
    fn empty_state_births_from_measurement() {
        let cfg = TrackerConfig::default();
        let mut s = MbmState::new();
        let b = BoxState::new([3.0, 4.0, 0.5], [2.0, 4.0, 1.5], 0.3, [1.0, 0.0]);
        mbm_update(&mut s, &frame(0.0, &[b]), &cfg, FeatureUse::NONE).unwrap();
        let best = s.best_components();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].state.mean[0], 3.0);
        assert_eq!(best[0].existence, 0.9);
        assert!((weight_sum(&s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_order_timestamps_are_rejected() {
        let cfg = TrackerConfig::default();
        let mut s = MbmState::new();
        mbm_update(&mut s, &frame(1.0, &[]), &cfg, FeatureUse::NONE).unwrap();
        assert!(matches!(
            mbm_update(&mut s, &frame(1.0, &[]), &cfg, FeatureUse::NONE),
            Err(Error::Sequencing { .. })
        ));
    }

    #[test]
    fn prune_relative_threshold() {
        let cfg = TrackerConfig::default();
        let mut s = MbmState::with_components(vec![component(0, 0.9, [0.0; 6]), component(1, 0.9, [9.0; 6])], 0.0);
        let w = [0.999f64, 1e-6];
        s.hypotheses = vec![
            GlobalHypothesis { weight: w[0], log_weight: w[0].ln(), selection: vec![Some(0), None] },
            GlobalHypothesis { weight: w[1], log_weight: w[1].ln(), selection: vec![None, Some(0)] },
        ];
        prune_and_cap(&mut s, &cfg);
        assert_eq!(s.hypotheses.len(), 1);
        assert!((s.hypotheses[0].weight - 1.0).abs() < 1e-15);
        // the dropped hypothesis was the only user of track 1
        assert_eq!(s.tracks.len(), 1);
        assert_eq!(s.tracks[0].label, 0);
    }

    #[test]
    fn single_hypothesis_is_unchanged_by_pruning() {
        let cfg = TrackerConfig::default();
        let mut s = MbmState::with_components(vec![component(0, 0.9, [0.0; 6])], 0.0);
        let before = s.clone();
        prune_and_cap(&mut s, &cfg);
        assert_eq!(s, before);
    }

    #[test]
    fn cap_keeps_heaviest() {
        let cfg = TrackerConfig { max_hypotheses: 1, hypothesis_prune: 0.0, ..Default::default() };
        let mut s = MbmState::with_components(vec![component(0, 0.9, [0.0; 6]), component(1, 0.9, [9.0; 6])], 0.0);
        s.hypotheses = vec![
            GlobalHypothesis { weight: 0.4, log_weight: 0.4f64.ln(), selection: vec![Some(0), None] },
            GlobalHypothesis { weight: 0.6, log_weight: 0.6f64.ln(), selection: vec![None, Some(0)] },
        ];
        prune_and_cap(&mut s, &cfg);
        assert_eq!(s.hypotheses.len(), 1);
        assert_eq!(s.tracks[0].label, 1);
    }

    #[test]
    fn extraction_uses_heaviest_hypothesis() {
        let cfg = TrackerConfig::default();
        assert!(extract_tracks(&MbmState::new(), &cfg).is_empty());
        let mut s = MbmState::with_components(
            vec![component(0, 0.9, [0.0; 6]), component(1, 0.9, [9.0; 6]), component(2, 0.3, [1.0; 6])],
            0.0,
        );
        s.hypotheses = vec![
            GlobalHypothesis { weight: 0.7, log_weight: 0.7f64.ln(), selection: vec![None, Some(0), Some(0)] },
            GlobalHypothesis { weight: 0.3, log_weight: 0.3f64.ln(), selection: vec![Some(0), None, None] },
        ];
        let out = extract_tracks(&s, &cfg);
        // component 2 is present but below the extraction threshold
        assert_eq!(out.iter().map(|t| t.label).collect::<Vec<_>>(), vec![1]);
        assert!((out[0].score - 0.9 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn labels_are_never_reused() {
        let cfg = TrackerConfig::default();
        let mut s = MbmState::new();
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..6 {
            let b = BoxState::new([k as f64 * 50.0, 0.0, 0.0], [2.0, 4.0, 1.5], 0.0, [0.0; 2]);
            mbm_update(&mut s, &frame(k as f64, &[b]), &cfg, FeatureUse::NONE).unwrap();
            for t in &s.tracks {
                seen.insert(t.label);
            }
        }
        assert_eq!(s.next_label(), 6);
        assert!(seen.iter().all(|l| *l < 6));
    }
}
