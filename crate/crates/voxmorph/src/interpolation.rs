//! Embedding fusion: spherical linear interpolation, normalized linear
//! interpolation, and the unnormalized linear-averaging baseline.
//!
//! Prosody and timbre are fused independently, each with its own method, so
//! ablations can mix methods per trait.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{
    angle_between, norm, EmbeddingError, EmbeddingKind, SpeakerEmbedding, SpeakerProfile,
};

/// Angles above `pi - ANTIPODAL_EPS` have no unique geodesic.
pub const ANTIPODAL_EPS: f64 = 1e-6;
/// Angles below this make `sin(omega)` too small to divide by; the geodesic
/// limit equals lerp, so we take that path instead.
pub const PARALLEL_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum InterpolationError {
    #[error("antipodal embeddings (angle {omega:.9} rad): geodesic is undefined")]
    AntipodalEmbeddings { omega: f64 },
    #[error("alpha must be in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Interpolation method for one embedding kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Slerp,
    Lerp,
    /// Unnormalized arithmetic mean of the two embeddings. The degraded
    /// baseline: its output leaves the unit hypersphere whenever the inputs
    /// differ, and it ignores alpha.
    LinearAverage,
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionMethod::Slerp => write!(f, "slerp"),
            FusionMethod::Lerp => write!(f, "lerp"),
            FusionMethod::LinearAverage => write!(f, "linear_average"),
        }
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slerp" => Ok(FusionMethod::Slerp),
            "lerp" => Ok(FusionMethod::Lerp),
            "linear_average" => Ok(FusionMethod::LinearAverage),
            other => Err(format!(
                "unknown fusion method {other:?} (expected slerp, lerp, or linear_average)"
            )),
        }
    }
}

/// Per-kind fusion methods plus the interpolation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStrategy {
    pub prosody_method: FusionMethod,
    pub timbre_method: FusionMethod,
    pub alpha: f64,
}

impl FusionStrategy {
    pub fn new(
        prosody_method: FusionMethod,
        timbre_method: FusionMethod,
        alpha: f64,
    ) -> Result<Self, InterpolationError> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(InterpolationError::AlphaOutOfRange(alpha));
        }
        Ok(FusionStrategy {
            prosody_method,
            timbre_method,
            alpha,
        })
    }

    /// Same method for both kinds.
    pub fn uniform(method: FusionMethod, alpha: f64) -> Result<Self, InterpolationError> {
        Self::new(method, method, alpha)
    }
}

impl Default for FusionStrategy {
    /// The reference setting: slerp on both kinds at an equal blend.
    fn default() -> Self {
        FusionStrategy {
            prosody_method: FusionMethod::Slerp,
            timbre_method: FusionMethod::Slerp,
            alpha: 0.5,
        }
    }
}

/// A fused embedding vector. Unlike [`SpeakerEmbedding`] it is allowed off
/// the unit sphere, because linear averaging produces non-unit vectors and
/// the synthesis stage must see them unaltered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedVector {
    kind: EmbeddingKind,
    values: Vec<f64>,
}

impl FusedVector {
    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// Renormalizes into a proper [`SpeakerEmbedding`]. Fails on the zero
    /// vector that linear averaging yields for antipodal inputs.
    pub fn to_unit(&self) -> Result<SpeakerEmbedding, EmbeddingError> {
        SpeakerEmbedding::new(self.kind, self.values.clone())
    }
}

/// Both fused traits plus the geometry and provenance of the fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedEmbeddingPair {
    pub prosody: FusedVector,
    pub timbre: FusedVector,
    pub strategy: FusionStrategy,
    pub source_ids: (String, String),
    /// Angle between the two source prosody embeddings, radians.
    pub omega_prosody: f64,
    /// Angle between the two source timbre embeddings, radians.
    pub omega_timbre: f64,
}

/// Angle between two unit vectors via `2 atan2(|a - b|, |a + b|)`. Unlike
/// `acos` of the dot product this stays accurate to machine precision near
/// 0 and pi, which the slerp weights need: their cancellation amplifies any
/// angle error by `1 / sin(omega)^2`.
fn stable_omega(a: &[f64], b: &[f64]) -> f64 {
    let mut diff_sq = 0.0;
    let mut sum_sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        diff_sq += (x - y) * (x - y);
        sum_sq += (x + y) * (x + y);
    }
    2.0 * diff_sq.sqrt().atan2(sum_sq.sqrt())
}

/// Spherical linear interpolation along the geodesic from `e_a` to `e_b`:
///
/// ```text
/// sin((1 - alpha) * omega) / sin(omega) * e_a + sin(alpha * omega) / sin(omega) * e_b
/// ```
///
/// where `omega` is the angle between the inputs. Nearly parallel inputs
/// fall back to lerp; antipodal inputs are an error. The output is scaled
/// back onto the unit sphere to strip accumulated rounding, which the raw
/// weight formula cannot keep below 1e-9 at angles near pi.
pub fn slerp(
    e_a: &SpeakerEmbedding,
    e_b: &SpeakerEmbedding,
    alpha: f64,
) -> Result<FusedVector, InterpolationError> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(InterpolationError::AlphaOutOfRange(alpha));
    }
    crate::embedding::check_compatible(e_a, e_b)?;
    let omega = stable_omega(e_a.values(), e_b.values());
    if omega > std::f64::consts::PI - ANTIPODAL_EPS {
        return Err(InterpolationError::AntipodalEmbeddings { omega });
    }
    if omega < PARALLEL_EPS {
        return lerp(e_a, e_b, alpha);
    }
    let sin_omega = omega.sin();
    let wa = (((1.0 - alpha) * omega).sin()) / sin_omega;
    let wb = ((alpha * omega).sin()) / sin_omega;
    let mut values: Vec<f64> = e_a
        .values()
        .iter()
        .zip(e_b.values())
        .map(|(a, b)| wa * a + wb * b)
        .collect();
    let n = norm(&values);
    if (n - 1.0).abs() > f64::EPSILON {
        for v in &mut values {
            *v /= n;
        }
    }
    Ok(FusedVector {
        kind: e_a.kind(),
        values,
    })
}

/// Normalized linear interpolation: `normalize((1 - alpha) * e_a + alpha * e_b)`.
///
/// Exact cancellation (antipodal inputs at alpha 0.5) surfaces as a
/// degenerate-embedding error.
pub fn lerp(
    e_a: &SpeakerEmbedding,
    e_b: &SpeakerEmbedding,
    alpha: f64,
) -> Result<FusedVector, InterpolationError> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(InterpolationError::AlphaOutOfRange(alpha));
    }
    angle_between(e_a, e_b)?;
    let raw: Vec<f64> = e_a
        .values()
        .iter()
        .zip(e_b.values())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    let values = crate::embedding::normalize(&raw)?;
    Ok(FusedVector {
        kind: e_a.kind(),
        values,
    })
}

/// Unnormalized arithmetic mean `(e_a + e_b) / 2`. The zero vector is a
/// legal output here; consumers decide whether to reject it.
pub fn linear_average(
    e_a: &SpeakerEmbedding,
    e_b: &SpeakerEmbedding,
) -> Result<FusedVector, InterpolationError> {
    angle_between(e_a, e_b)?;
    let values: Vec<f64> = e_a
        .values()
        .iter()
        .zip(e_b.values())
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    Ok(FusedVector {
        kind: e_a.kind(),
        values,
    })
}

/// Dispatches to the method's function. `alpha` is ignored by linear
/// averaging, which is defined as the fixed midpoint mean.
pub fn apply_method(
    method: FusionMethod,
    e_a: &SpeakerEmbedding,
    e_b: &SpeakerEmbedding,
    alpha: f64,
) -> Result<FusedVector, InterpolationError> {
    match method {
        FusionMethod::Slerp => slerp(e_a, e_b, alpha),
        FusionMethod::Lerp => lerp(e_a, e_b, alpha),
        FusionMethod::LinearAverage => linear_average(e_a, e_b),
    }
}

/// Fuses two speaker profiles trait by trait, recording the source angles.
pub fn fuse_pair(
    profile_a: &SpeakerProfile,
    profile_b: &SpeakerProfile,
    strategy: FusionStrategy,
) -> Result<FusedEmbeddingPair, InterpolationError> {
    let omega_prosody = angle_between(profile_a.prosody(), profile_b.prosody())?;
    let omega_timbre = angle_between(profile_a.timbre(), profile_b.timbre())?;
    let prosody = apply_method(
        strategy.prosody_method,
        profile_a.prosody(),
        profile_b.prosody(),
        strategy.alpha,
    )?;
    let timbre = apply_method(
        strategy.timbre_method,
        profile_a.timbre(),
        profile_b.timbre(),
        strategy.alpha,
    )?;
    Ok(FusedEmbeddingPair {
        prosody,
        timbre,
        strategy,
        source_ids: (profile_a.speaker_id.clone(), profile_b.speaker_id.clone()),
        omega_prosody,
        omega_timbre,
    })
}
