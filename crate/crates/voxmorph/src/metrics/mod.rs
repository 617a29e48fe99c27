//! Evaluation metrics: Fréchet audio distance over embedding statistics,
//! KL divergence of pooled log-mel histograms, word error rate, and the
//! morph match-rate family (MMPMR / FMMPMR).

pub mod fad;
pub mod kld;
pub mod match_rate;
pub mod report;
pub mod wer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("empty reference transcript")]
    EmptyReference,
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error("report invariant violated: {0}")]
    ReportInvariant(String),
}

pub use fad::{frechet_distance, gaussian_stats, GaussianStats};
pub use kld::{histogram_kld, kl_divergence, kld_logmel};
pub use match_rate::{fmmpmr, mmpmr};
pub use report::MetricReport;
pub use wer::{normalize_transcript, wer};
