//! Voice identity morphing pipeline and biometric attack evaluation toolkit.
//!
//! The crate fuses two speakers' prosody and timbre embeddings on the unit
//! hypersphere, synthesizes a morphed waveform through a three-stage
//! pipeline (token generation, flow-matching mel synthesis, vocoding), and
//! evaluates the result as a presentation attack against speaker
//! verification: FAR-calibrated thresholds, MMPMR/FMMPMR match rates, and
//! the FAD/KLD/WER quality metrics.
//!
//! All stages run against pluggable backends. A deterministic toy backend
//! (analytic voices built from harmonic stacks, with a matching encoder that
//! can invert them) ships in [`toy`] so the full pipeline is testable end to
//! end without any pretrained model. See the `examples/` directory for
//! runnable walkthroughs of each capability.

pub mod asv;
pub mod audio;
pub mod embedding;
pub mod interpolation;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod runner;
pub mod seeding;
pub mod toy;

pub use embedding::{EmbeddingKind, Gender, SpeakerEmbedding, SpeakerProfile};
pub use interpolation::{fuse_pair, lerp, linear_average, slerp, FusionMethod, FusionStrategy};
