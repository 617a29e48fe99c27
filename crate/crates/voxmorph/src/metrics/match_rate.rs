//! Morph match rates. Each morph is scored against both source identities;
//! MMPMR accepts when the better score clears the threshold, FMMPMR only
//! when both do. Acceptance is strict (`score > tau`) to match the
//! verification rule.

use super::MetricError;

fn check_non_empty(scores: &[(f64, f64)]) -> Result<(), MetricError> {
    if scores.is_empty() {
        return Err(MetricError::InsufficientData(
            "match rate needs at least one morph score pair".into(),
        ));
    }
    Ok(())
}

/// Percentage of morphs whose similarity to at least one source exceeds
/// `tau`.
pub fn mmpmr(scores: &[(f64, f64)], tau: f64) -> Result<f64, MetricError> {
    check_non_empty(scores)?;
    let hits = scores
        .iter()
        .filter(|(sim_a, sim_b)| sim_a.max(*sim_b) > tau)
        .count();
    Ok(100.0 * hits as f64 / scores.len() as f64)
}

/// Percentage of morphs whose similarity to both sources exceeds `tau`.
pub fn fmmpmr(scores: &[(f64, f64)], tau: f64) -> Result<f64, MetricError> {
    check_non_empty(scores)?;
    let hits = scores
        .iter()
        .filter(|(sim_a, sim_b)| sim_a.min(*sim_b) > tau)
        .count();
    Ok(100.0 * hits as f64 / scores.len() as f64)
}
