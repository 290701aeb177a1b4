use super::clear::{accumulate, validate, ClearCounts};
use super::EvalSequence;
use crate::error::{Error, Result};

pub const DEFAULT_RECALL_POINTS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct AmotaReport {
    pub amota: f64,
    pub amotp: f64,
    /// Per recall target: `(target, score threshold, MOTAR, MOTP)`; the
    /// threshold is `None` when no threshold reaches the target.
    pub points: Vec<(f64, Option<f64>, f64, f64)>,
}

/// `n` evenly spaced recall targets from 0.1 to 1.
pub fn recall_targets(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| 0.1 + 0.9 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Recall-normalized MOTA at target recall `r`.
fn motar(c: &ClearCounts, r: f64) -> f64 {
    let p = c.num_gt as f64;
    let errors = (c.id_switches + c.false_positives + c.misses) as f64 - (1.0 - r) * p;
    (1.0 - errors / (r * p)).clamp(0.0, 1.0)
}

/// For each recall target, takes the highest score threshold whose recall
/// reaches it and evaluates MOTAR/MOTP there; unreached targets count as
/// MOTAR 0 and MOTP equal to the distance gate. Both are averaged over all
/// targets.
pub fn compute_amota(sequences: &[EvalSequence], dist_threshold: f64, n_recall_points: usize) -> Result<AmotaReport> {
    validate(sequences, dist_threshold)?;
    if n_recall_points == 0 {
        return Err(Error::invalid("need at least one recall point"));
    }
    let mut scores: Vec<f64> = sequences
        .iter()
        .flat_map(|s| s.frames.iter().flat_map(|f| f.tracks.iter().map(|t| t.score)))
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let num_gt: usize = sequences.iter().flat_map(|s| &s.frames).map(|f| f.gt.len()).sum();
    if num_gt == 0 {
        return Err(Error::UndefinedMetric("no ground-truth objects".into()));
    }

    let mut cache: Vec<Option<ClearCounts>> = vec![None; scores.len()];
    let mut at = |i: usize| -> ClearCounts {
        cache[i]
            .get_or_insert_with(|| accumulate(sequences, dist_threshold, Some(scores[i])))
            .clone()
    };

    let mut points = Vec::with_capacity(n_recall_points);
    for r in recall_targets(n_recall_points) {
        // recall grows as the threshold drops; find the first index reaching r
        let (mut lo, mut hi) = (0usize, scores.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if at(mid).recall() >= r {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if lo < scores.len() {
            let c = at(lo);
            let motp = c.motp().unwrap_or(dist_threshold);
            points.push((r, Some(scores[lo]), motar(&c, r), motp));
        } else {
            points.push((r, None, 0.0, dist_threshold));
        }
    }
    let n = points.len() as f64;
    Ok(AmotaReport {
        amota: points.iter().map(|p| p.2).sum::<f64>() / n,
        amotp: points.iter().map(|p| p.3).sum::<f64>() / n,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn targets_span_tenth_to_one() {
        let t = recall_targets(40);
        assert_eq!(t.len(), 40);
        assert!((t[0] - 0.1).abs() < 1e-15);
        assert!((t[39] - 1.0).abs() < 1e-15);
        assert_eq!(recall_targets(2), vec![0.1, 1.0]);
    }

    #[test]
    fn perfect_uniform_scores() {
        let g = vec![obj(1, 0.0, 0.0), obj(2, 10.0, 0.0)];
        let s = seq(vec![(g.clone(), g.clone()), (g.clone(), g)]);
        let r = compute_amota(&s, 2.0, 40).unwrap();
        assert_eq!(r.amota, 1.0);
        assert_eq!(r.amotp, 0.0);
    }

    #[test]
    fn empty_output() {
        let s = seq(vec![(vec![obj(1, 0.0, 0.0)], vec![])]);
        let r = compute_amota(&s, 2.0, 40).unwrap();
        assert_eq!(r.amota, 0.0);
        assert_eq!(r.amotp, 2.0);
    }

    #[test]
    fn two_threshold_hand_case() {
        // 2 gt per frame for 2 frames (P = 4). Object 1 is tracked with
        // score 0.9 at 0.5 m; object 2 with score 0.4 at 1 m, plus a 0.4 FP.
        let g = vec![obj(1, 0.0, 0.0), obj(2, 10.0, 0.0)];
        let t = vec![scored(7, 0.5, 0.0, 0.9), scored(8, 11.0, 0.0, 0.4), scored(9, 50.0, 0.0, 0.4)];
        let s = seq(vec![(g.clone(), t.clone()), (g, t)]);
        let r = compute_amota(&s, 2.0, 2).unwrap();
        // target 0.1 -> threshold 0.9: TP 2, FN 2, FP 0, recall 0.5
        //   MOTAR = 1 - (2 - 0.9*4)/(0.1*4) = 1 + 4 -> clipped 1, MOTP 0.5
        // target 1.0 -> threshold 0.4: TP 4, FP 2
        //   MOTAR = 1 - 2/4 = 0.5, MOTP = (2*0.5 + 2*1)/4 = 0.75
        assert_eq!(r.points[0].1, Some(0.9));
        assert_eq!(r.points[1].1, Some(0.4));
        assert!((r.amota - 0.75).abs() < 1e-15);
        assert!((r.amotp - 0.625).abs() < 1e-15);
    }

    #[test]
    fn unreached_targets_count_as_zero() {
        // recall tops out at 0.5
        let g = vec![obj(1, 0.0, 0.0), obj(2, 10.0, 0.0)];
        let s = seq(vec![(g, vec![scored(7, 0.0, 0.0, 0.8)])]);
        let r = compute_amota(&s, 2.0, 2).unwrap();
        assert_eq!(r.points[1].1, None);
        assert!((r.amota - 0.5).abs() < 1e-15);
        assert!((r.amotp - 1.0).abs() < 1e-15);
    }
}
