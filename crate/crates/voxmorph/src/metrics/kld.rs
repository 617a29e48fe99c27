//! KL divergence between histograms of pooled log-mel values.

use crate::audio::mel::{log_mel, MelConfig};
use crate::audio::Waveform;

use super::MetricError;

/// Histogram bin count for log-mel value pooling.
pub const KLD_BINS: usize = 100;
/// Additive smoothing applied to every bin before normalization.
pub const KLD_EPSILON: f64 = 1e-10;

/// KL(p || q) in nats over two probability vectors of equal length. Bins
/// where `p` is zero contribute nothing; the caller is responsible for
/// smoothing `q` away from zero wherever `p` has mass.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::ShapeError(format!(
            "histogram lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// Builds smoothed histograms of two pooled samples over equal-width bins
/// spanning their union range, then returns KL(generated || reference).
pub fn histogram_kld(generated: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    if generated.is_empty() || reference.is_empty() {
        return Err(MetricError::InsufficientData(
            "histogram inputs must be non-empty".into(),
        ));
    }
    let lo = generated
        .iter()
        .chain(reference)
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = generated
        .iter()
        .chain(reference)
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(MetricError::ShapeError("non-finite histogram input".into()));
    }
    let width = hi - lo;
    let bin_of = |v: f64| {
        if width == 0.0 {
            0
        } else {
            (((v - lo) / width * KLD_BINS as f64) as usize).min(KLD_BINS - 1)
        }
    };
    let mut p = vec![KLD_EPSILON; KLD_BINS];
    let mut q = vec![KLD_EPSILON; KLD_BINS];
    for &v in generated {
        p[bin_of(v)] += 1.0;
    }
    for &v in reference {
        q[bin_of(v)] += 1.0;
    }
    let p_total: f64 = p.iter().sum();
    let q_total: f64 = q.iter().sum();
    for v in &mut p {
        *v /= p_total;
    }
    for v in &mut q {
        *v /= q_total;
    }
    kl_divergence(&p, &q)
}

/// KL divergence between the pooled log-mel value distributions of a
/// generated waveform and its reference audio.
pub fn kld_logmel(
    generated: &Waveform,
    reference: &Waveform,
    config: &MelConfig,
) -> Result<f64, MetricError> {
    let g = log_mel(generated, config)?;
    let r = log_mel(reference, config)?;
    histogram_kld(g.data(), r.data())
}
