//! Speaker embedding types, normalization, multi-clip profile aggregation,
//! and the similarity geometry every downstream stage relies on.
//!
//! Embeddings live on the unit hypersphere: construction normalizes and
//! rejects degenerate inputs, so dot products are always valid cosines.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm below which a vector is considered degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("degenerate embedding: norm {norm:.3e} below {DEGENERATE_NORM:.0e}")]
    DegenerateEmbedding { norm: f64 },
    #[error("embedding dimension mismatch: {left} vs {right}")]
    ShapeError { left: usize, right: usize },
    #[error("embedding kind mismatch: {left} vs {right}")]
    KindError {
        left: EmbeddingKind,
        right: EmbeddingKind,
    },
    #[error("cannot aggregate an empty profile")]
    EmptyProfile,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding dimension must be at least 2, got {0}")]
    DimTooSmall(usize),
    #[error("profile must have between 1 and {max} clips, got {got}")]
    ClipCount { got: usize, max: usize },
    #[error("embedding file {path}: {reason}")]
    FileFormat { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which disentangled vocal trait an embedding captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// Speaking style: rhythm and pitch contour.
    Prosody,
    /// Core vocal identity.
    Timbre,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingKind::Prosody => write!(f, "prosody"),
            EmbeddingKind::Timbre => write!(f, "timbre"),
        }
    }
}

/// Speaker gender as recorded in corpus metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    /// Parses a corpus sex code such as `F` or `M`; anything else is unknown.
    pub fn from_code(code: &str) -> Gender {
        match code.trim() {
            "F" | "f" => Gender::Female,
            "M" | "m" => Gender::Male,
            _ => Gender::Unknown,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::Female => write!(f, "female"),
            Gender::Male => write!(f, "male"),
            Gender::Unknown => write!(f, "unknown"),
        }
    }
}

/// A unit-norm vector tagged with the vocal trait it represents.
///
/// The constructor normalizes, so every `SpeakerEmbedding` in the program has
/// Euclidean norm 1 within 1e-9 and finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    kind: EmbeddingKind,
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    /// Builds a unit-norm embedding from raw encoder output.
    pub fn new(kind: EmbeddingKind, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.len() < 2 {
            return Err(EmbeddingError::DimTooSmall(values.len()));
        }
        let values = normalize(&values)?;
        Ok(SpeakerEmbedding { kind, values })
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm of the stored values. Unity by construction; exposed
    /// for invariant checks.
    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Euclidean norm.
pub fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales a vector to unit norm, preserving direction.
///
/// Rejects vectors with non-finite entries or norm below [`DEGENERATE_NORM`].
pub fn normalize(values: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let n = norm(values);
    if n < DEGENERATE_NORM {
        return Err(EmbeddingError::DegenerateEmbedding { norm: n });
    }
    Ok(values.iter().map(|v| v / n).collect())
}

pub(crate) fn check_compatible(
    a: &SpeakerEmbedding,
    b: &SpeakerEmbedding,
) -> Result<(), EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::ShapeError {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.kind() != b.kind() {
        return Err(EmbeddingError::KindError {
            left: a.kind(),
            right: b.kind(),
        });
    }
    Ok(())
}

/// Cosine similarity of two unit embeddings, clamped to [-1, 1] so a
/// downstream `acos` can never produce NaN.
pub fn cosine_similarity(
    a: &SpeakerEmbedding,
    b: &SpeakerEmbedding,
) -> Result<f64, EmbeddingError> {
    check_compatible(a, b)?;
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Angle between two embeddings of the same kind, in radians within [0, pi].
pub fn angle_between(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64, EmbeddingError> {
    Ok(cosine_similarity(a, b)?.acos())
}

/// Mean-then-renormalize aggregation of per-clip embeddings into one profile
/// embedding. Fails on an empty list or when the mean cancels to zero.
pub fn aggregate_profile(
    embeddings: &[SpeakerEmbedding],
) -> Result<SpeakerEmbedding, EmbeddingError> {
    let first = embeddings.first().ok_or(EmbeddingError::EmptyProfile)?;
    let kind = first.kind();
    let dim = first.dim();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        check_compatible(first, e)?;
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    let k = embeddings.len() as f64;
    for m in &mut mean {
        *m /= k;
    }
    SpeakerEmbedding::new(kind, mean)
}

/// Maximum clips per profile under the multi-clip protocol.
pub const MAX_PROFILE_CLIPS: usize = 7;

/// One source clip backing a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub clip_id: String,
    /// Duration in seconds.
    pub duration: f64,
}

/// A speaker's clips, per-clip embeddings, and aggregated profile embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub gender: Gender,
    pub clips: Vec<ClipRef>,
    pub prosody_embeddings: Vec<SpeakerEmbedding>,
    pub timbre_embeddings: Vec<SpeakerEmbedding>,
    aggregated_prosody: SpeakerEmbedding,
    aggregated_timbre: SpeakerEmbedding,
}

impl SpeakerProfile {
    /// Assembles a profile from per-clip embeddings, aggregating each kind.
    pub fn new(
        speaker_id: impl Into<String>,
        gender: Gender,
        clips: Vec<ClipRef>,
        prosody_embeddings: Vec<SpeakerEmbedding>,
        timbre_embeddings: Vec<SpeakerEmbedding>,
    ) -> Result<Self, EmbeddingError> {
        if clips.is_empty() || clips.len() > MAX_PROFILE_CLIPS {
            return Err(EmbeddingError::ClipCount {
                got: clips.len(),
                max: MAX_PROFILE_CLIPS,
            });
        }
        let aggregated_prosody = aggregate_profile(&prosody_embeddings)?;
        let aggregated_timbre = aggregate_profile(&timbre_embeddings)?;
        if aggregated_prosody.kind() != EmbeddingKind::Prosody {
            return Err(EmbeddingError::KindError {
                left: aggregated_prosody.kind(),
                right: EmbeddingKind::Prosody,
            });
        }
        if aggregated_timbre.kind() != EmbeddingKind::Timbre {
            return Err(EmbeddingError::KindError {
                left: aggregated_timbre.kind(),
                right: EmbeddingKind::Timbre,
            });
        }
        Ok(SpeakerProfile {
            speaker_id: speaker_id.into(),
            gender,
            clips,
            prosody_embeddings,
            timbre_embeddings,
            aggregated_prosody,
            aggregated_timbre,
        })
    }

    /// Builds a single-clip profile directly from known embeddings. Used by
    /// tests and by callers that already hold aggregated vectors.
    pub fn from_embeddings(
        speaker_id: impl Into<String>,
        gender: Gender,
        prosody: SpeakerEmbedding,
        timbre: SpeakerEmbedding,
    ) -> Result<Self, EmbeddingError> {
        Self::new(
            speaker_id,
            gender,
            vec![ClipRef {
                clip_id: "synthetic".to_owned(),
                duration: 0.0,
            }],
            vec![prosody],
            vec![timbre],
        )
    }

    pub fn prosody(&self) -> &SpeakerEmbedding {
        &self.aggregated_prosody
    }

    pub fn timbre(&self) -> &SpeakerEmbedding {
        &self.aggregated_timbre
    }
}

/// Sidecar metadata accompanying an embedding payload on disk. The pair of
/// files is also the wire contract for external encoder backends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingMeta {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub speaker_id: String,
    pub clip_id: String,
    pub encoder_name: String,
    pub encoder_version: String,
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

/// Writes an embedding as little-endian f32 plus a `.meta` text sidecar with
/// the same basename.
pub fn write_embedding(
    path: &Path,
    embedding: &SpeakerEmbedding,
    meta: &EmbeddingMeta,
) -> Result<(), EmbeddingError> {
    let mut payload = Vec::with_capacity(embedding.dim() * 4);
    for v in embedding.values() {
        payload.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&payload).map_err(io_err)?;
    let sidecar = format!(
        "kind={}\ndim={}\nspeaker_id={}\nclip_id={}\nencoder_name={}\nencoder_version={}\n",
        meta.kind,
        embedding.dim(),
        meta.speaker_id,
        meta.clip_id,
        meta.encoder_name,
        meta.encoder_version,
    );
    fs::write(meta_path(path), sidecar).map_err(|source| EmbeddingError::Io {
        path: meta_path(path),
        source,
    })?;
    Ok(())
}

/// Reads an embedding payload and its `.meta` sidecar. The payload is
/// renormalized on load; f32 storage loses the last few decimals of norm.
pub fn read_embedding(path: &Path) -> Result<(SpeakerEmbedding, EmbeddingMeta), EmbeddingError> {
    let sidecar_path = meta_path(path);
    let sidecar = fs::read_to_string(&sidecar_path).map_err(|source| EmbeddingError::Io {
        path: sidecar_path.clone(),
        source,
    })?;
    let mut kind = None;
    let mut dim = None;
    let mut speaker_id = String::new();
    let mut clip_id = String::new();
    let mut encoder_name = String::new();
    let mut encoder_version = String::new();
    for line in sidecar.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key.trim() {
            "kind" => {
                kind = Some(match value.trim() {
                    "prosody" => EmbeddingKind::Prosody,
                    "timbre" => EmbeddingKind::Timbre,
                    other => {
                        return Err(EmbeddingError::FileFormat {
                            path: sidecar_path,
                            reason: format!("unknown kind {other:?}"),
                        })
                    }
                });
            }
            "dim" => {
                dim = Some(value.trim().parse::<usize>().map_err(|e| {
                    EmbeddingError::FileFormat {
                        path: sidecar_path.clone(),
                        reason: format!("bad dim: {e}"),
                    }
                })?);
            }
            "speaker_id" => speaker_id = value.trim().to_owned(),
            "clip_id" => clip_id = value.trim().to_owned(),
            "encoder_name" => encoder_name = value.trim().to_owned(),
            "encoder_version" => encoder_version = value.trim().to_owned(),
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| EmbeddingError::FileFormat {
        path: sidecar_path.clone(),
        reason: "missing kind".to_owned(),
    })?;
    let dim = dim.ok_or_else(|| EmbeddingError::FileFormat {
        path: sidecar_path.clone(),
        reason: "missing dim".to_owned(),
    })?;

    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    if bytes.len() != dim * 4 {
        return Err(EmbeddingError::FileFormat {
            path: path.to_path_buf(),
            reason: format!("payload is {} bytes, expected {}", bytes.len(), dim * 4),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let embedding = SpeakerEmbedding::new(kind, values)?;
    Ok((
        embedding,
        EmbeddingMeta {
            kind,
            dim,
            speaker_id,
            clip_id,
            encoder_name,
            encoder_version,
        },
    ))
}
