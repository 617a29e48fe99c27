//! Backend contracts for the three synthesis stages plus the encoders used
//! around them. Implementations may run in process (the toy backend) or
//! spawn an external executable per call (see [`super::external`]).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::mel::{LogMelSpectrogram, MelConfig};
use crate::audio::{AudioError, Waveform};
use crate::embedding::{EmbeddingError, SpeakerEmbedding};
use crate::interpolation::{FusedVector, InterpolationError};
use crate::pipeline::flow::{FlowError, DEFAULT_FLOW_STEPS};

/// Default minimum source-clip duration for embedding extraction, seconds.
pub const DEFAULT_MIN_CLIP_DURATION: f64 = 5.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input too short: {got:.2} s, backend requires at least {needed:.2} s")]
    TooShort { needed: f64, got: f64 },
    #[error("{stage} backend failed: {message}")]
    Backend { stage: String, message: String },
    #[error("{stage} backend violated its contract: {message}")]
    ContractViolation { stage: String, message: String },
    #[error("morph text must be non-empty")]
    EmptyText,
    #[error("stage {stage} failed: {source}")]
    StageFailed {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Interpolation(#[from] InterpolationError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(PipelineError) -> PipelineError {
        move |source| PipelineError::StageFailed {
            stage,
            source: Box::new(source),
        }
    }
}

/// Identity of a backend implementation, recorded in provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendId {
    pub stage: String,
    pub name: String,
    pub version: String,
}

impl BackendId {
    pub fn new(stage: &str, name: &str, version: &str) -> Self {
        BackendId {
            stage: stage.to_owned(),
            name: name.to_owned(),
            version: version.to_owned(),
        }
    }
}

/// A generated acoustic-token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    vocab_size: u32,
}

impl TokenSequence {
    /// Validates that every token is within the vocabulary.
    pub fn new(tokens: Vec<u32>, vocab_size: u32) -> Result<Self, PipelineError> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(PipelineError::ContractViolation {
                stage: "tokens".into(),
                message: format!("token {bad} outside vocabulary of {vocab_size}"),
            });
        }
        Ok(TokenSequence { tokens, vocab_size })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Knobs for the mel-synthesis stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub flow_steps: usize,
    pub guidance_scale: f64,
    pub mel: MelConfig,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            flow_steps: DEFAULT_FLOW_STEPS,
            guidance_scale: 1.0,
            mel: MelConfig::default(),
        }
    }
}

/// Dual encoder: one waveform in, a prosody and a timbre embedding out.
pub trait EncoderBackend: Send + Sync {
    fn id(&self) -> BackendId;
    fn prosody_dim(&self) -> usize;
    fn timbre_dim(&self) -> usize;
    /// Shortest input this encoder accepts, in seconds.
    fn min_duration(&self) -> f64;
    fn reentrant(&self) -> bool;
    fn extract(
        &self,
        waveform: &Waveform,
    ) -> Result<(SpeakerEmbedding, SpeakerEmbedding), PipelineError>;
}

/// Autoregressive token generation conditioned on text and fused prosody.
/// Token `i` may depend only on tokens before `i`, the text, and the prosody
/// embedding; generation is deterministic given the seed.
pub trait TokenGenerator: Send + Sync {
    fn id(&self) -> BackendId;
    fn vocab_size(&self) -> u32;
    fn reentrant(&self) -> bool;
    fn generate(
        &self,
        text: &str,
        prosody: &FusedVector,
        seed: u64,
    ) -> Result<TokenSequence, PipelineError>;
}

/// Mel synthesis from tokens conditioned on fused timbre.
pub trait MelDecoder: Send + Sync {
    fn id(&self) -> BackendId;
    fn reentrant(&self) -> bool;
    fn synthesize(
        &self,
        tokens: &TokenSequence,
        timbre: &FusedVector,
        options: &SynthesisOptions,
        seed: u64,
    ) -> Result<LogMelSpectrogram, PipelineError>;
}

/// Mel matrix to waveform.
pub trait Vocoder: Send + Sync {
    fn id(&self) -> BackendId;
    fn reentrant(&self) -> bool;
    fn vocode(&self, mel: &LogMelSpectrogram) -> Result<Waveform, PipelineError>;
}

/// Verification embedding extractor used for scoring and calibration.
pub trait AsvEncoder: Send + Sync {
    fn id(&self) -> BackendId;
    fn min_duration(&self) -> f64;
    fn reentrant(&self) -> bool;
    fn embed(&self, waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError>;
}

/// Optional speech recognizer; absent in the toy backend set, in which case
/// reports carry a null WER.
pub trait AsrBackend: Send + Sync {
    fn id(&self) -> BackendId;
    fn reentrant(&self) -> bool;
    fn transcribe(&self, waveform: &Waveform) -> Result<String, PipelineError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_sequence_checks_vocabulary() {
        let ok = TokenSequence::new(vec![0, 255], 256).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(matches!(
            TokenSequence::new(vec![0, 256], 256),
            Err(PipelineError::ContractViolation { .. })
        ));
    }

    #[test]
    fn empty_sequence_is_allowed() {
        let seq = TokenSequence::new(vec![], 256).unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn stage_tagging_wraps_errors() {
        let inner = PipelineError::EmptyText;
        let tagged = PipelineError::at_stage("tokens")(inner);
        let msg = tagged.to_string();
        assert!(msg.contains("stage tokens"), "{msg}");
    }
}
