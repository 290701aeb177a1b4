use serde::{Deserialize, Serialize};

use super::cost::{Assignment, CostMatrix};
use super::hungarian::hungarian;
use crate::cascade::{normalize_box, DetectionRegion};
use crate::error::{Error, Result};
use crate::geometry::BoxState;

const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_cls: f64,
    pub w_reg: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_cls: 2.0,
            w_reg: 0.25,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_cls, self.w_reg, self.focal_alpha, self.focal_gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Sigmoid focal loss of one probability against a binary target.
pub fn focal_loss(p: f64, is_positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let (p_t, alpha_t) = if is_positive { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    -alpha_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// L1 distance over the ten box parameters, positions normalized to the
/// detection region first.
pub fn l1_box_cost(pred: &BoxState, gt: &BoxState, region: &DetectionRegion) -> f64 {
    let a = normalize_box(pred, region).to_array();
    let b = normalize_box(gt, region).to_array();
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bbox: BoxState,
    /// Per-class probabilities.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bbox: BoxState,
    pub class: usize,
}

fn check_classes(preds: &[Prediction], gts: &[GroundTruth]) -> Result<()> {
    for (j, g) in gts.iter().enumerate() {
        if let Some(i) = preds.iter().position(|p| g.class >= p.scores.len()) {
            return Err(Error::invalid(format!(
                "ground truth {j} has class {} but prediction {i} scores only {} classes",
                g.class,
                preds[i].scores.len()
            )));
        }
    }
    Ok(())
}

/// Matching cost: weighted positive-class focal term plus weighted L1.
pub fn build_cost_matrix(
    preds: &[Prediction],
    gts: &[GroundTruth],
    weights: &LossWeights,
    region: &DetectionRegion,
) -> Result<CostMatrix> {
    if preds.is_empty() {
        return Err(Error::invalid("set prediction needs at least one prediction"));
    }
    check_classes(preds, gts)?;
    let mut m = CostMatrix::filled(preds.len(), gts.len(), 0.0);
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let cls = focal_loss(p.scores[g.class], true, weights.focal_alpha, weights.focal_gamma);
            let reg = l1_box_cost(&p.bbox, &g.bbox, region);
            m.set(i, j, weights.w_cls * cls + weights.w_reg * reg);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetLoss {
    pub total: f64,
    pub classification: f64,
    pub regression: f64,
    pub matching: Assignment,
}

/// Hungarian matching on [`build_cost_matrix`], then the focal loss over
/// every prediction and class (matched predictions positive for their
/// ground-truth class) plus L1 over matched pairs.
pub fn set_prediction_loss(
    preds: &[Prediction],
    gts: &[GroundTruth],
    weights: &LossWeights,
    region: &DetectionRegion,
) -> Result<SetLoss> {
    weights.validate()?;
    let costs = build_cost_matrix(preds, gts, weights, region)?;
    let matching = hungarian(&costs)?;
    let mut target: Vec<Option<usize>> = vec![None; preds.len()];
    for &(i, j) in &matching.pairs {
        target[i] = Some(gts[j].class);
    }
    let classification: f64 = preds
        .iter()
        .zip(&target)
        .flat_map(|(p, t)| {
            p.scores.iter().enumerate().map(move |(c, &s)| {
                focal_loss(s, *t == Some(c), weights.focal_alpha, weights.focal_gamma)
            })
        })
        .sum();
    let regression: f64 = matching
        .pairs
        .iter()
        .map(|&(i, j)| l1_box_cost(&preds[i].bbox, &gts[j].bbox, region))
        .sum();
    Ok(SetLoss {
        total: weights.w_cls * classification + weights.w_reg * regression,
        classification,
        regression,
        matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_hand_values() {
        let v = focal_loss(0.9, true, 0.25, 2.0);
        assert!((v - 0.25 * 0.01 * -(0.9f64.ln())).abs() < 1e-15);
        assert!((v - 2.634e-4).abs() < 1e-7);
        let ce = focal_loss(0.5, true, 0.5, 0.0);
        assert!((ce - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(focal_loss(1.0, true, 0.25, 2.0) < 1e-15);
        assert!(focal_loss(0.0, false, 0.25, 2.0) < 1e-15);
    }

    #[test]
    fn focal_negative_uses_complement() {
        let a = focal_loss(0.2, false, 0.25, 2.0);
        let b = 0.75 * 0.2f64.powi(2) * -(0.8f64.ln());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn l1_single_coordinate() {
        let r = DetectionRegion::default();
        let a = BoxState::new([0.0, 0.0, 0.0], [2.0, 4.0, 1.5], 0.0, [0.0; 2]);
        assert_eq!(l1_box_cost(&a, &a, &r), 0.0);
        let mut b = a;
        b.cx += 0.1 * 122.4; // 0.1 of the normalized x range
        assert!((l1_box_cost(&a, &b, &r) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn weights_scale_cells_linearly() {
        let r = DetectionRegion::default();
        let preds = vec![Prediction {
            bbox: BoxState::new([1.0, 2.0, 0.0], [2.0, 4.0, 1.5], 0.1, [0.0; 2]),
            scores: vec![0.3, 0.6],
        }];
        let gts = vec![GroundTruth {
            bbox: BoxState::new([0.0, 2.5, 0.2], [2.1, 4.0, 1.5], 0.0, [0.5, 0.0]),
            class: 1,
        }];
        let w = LossWeights::default();
        let w3 = LossWeights { w_cls: 6.0, w_reg: 0.75, ..w };
        let a = build_cost_matrix(&preds, &gts, &w, &r).unwrap();
        let b = build_cost_matrix(&preds, &gts, &w3, &r).unwrap();
        assert!((b.get(0, 0) - 3.0 * a.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn class_index_is_checked() {
        let r = DetectionRegion::default();
        let b = BoxState::new([0.0; 3], [1.0; 3], 0.0, [0.0; 2]);
        let preds = vec![Prediction { bbox: b, scores: vec![0.5] }];
        let gts = vec![GroundTruth { bbox: b, class: 2 }];
        assert!(build_cost_matrix(&preds, &gts, &LossWeights::default(), &r).is_err());
        assert!(build_cost_matrix(&[], &gts, &LossWeights::default(), &r).is_err());
    }
}
