use super::config::TrackerConfig;
use super::ukf::{innovation, mahalanobis, BernoulliComponent, Measurement};
use crate::error::{Error, Result};

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `l_box + alpha * l_roi + beta * l_prop`; absent appearance terms add 0.
pub fn hybrid_likelihood(l_box: f64, l_roi: Option<f64>, l_prop: Option<f64>, cfg: &TrackerConfig) -> f64 {
    l_box + cfg.alpha * l_roi.unwrap_or(0.0) + cfg.beta * l_prop.unwrap_or(0.0)
}

/// Cosine similarity of an observed embedding against a memory, or `None`
/// when either side is missing or degenerate.
pub fn appearance_term(memory: &Option<Vec<f64>>, observed: &Option<Vec<f64>>) -> Option<f64> {
    match (memory, observed) {
        (Some(m), Some(o)) => cosine_similarity(m, o).ok(),
        _ => None,
    }
}

pub fn gate_distance(comp: &BernoulliComponent, z: &Measurement, cfg: &TrackerConfig) -> Result<f64> {
    let inn = innovation(comp, z, cfg)?;
    mahalanobis(&inn.residual, &inn.cov)
}

/// The gate is closed: a distance exactly on the radius passes.
pub fn within_gate(distance: f64, cfg: &TrackerConfig) -> bool {
    distance <= cfg.gate_threshold().sqrt()
}

pub fn gate(comp: &BernoulliComponent, z: &Measurement, cfg: &TrackerConfig) -> Result<bool> {
    Ok(within_gate(gate_distance(comp, z, cfg)?, cfg))
}
