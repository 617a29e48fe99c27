//! Three-stage synthesis orchestration over pluggable backends: token
//! generation from text and fused prosody, flow-matched mel synthesis
//! conditioned on fused timbre, and vocoding. A [`BackendSet`] bundles one
//! implementation per stage and serializes calls to any backend that does
//! not declare itself reentrant.

pub mod backend;
pub mod external;
pub mod flow;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::audio::mel::LogMelSpectrogram;
use crate::audio::{Waveform, CANONICAL_RATE};
use crate::embedding::{SpeakerEmbedding, SpeakerProfile};
use crate::interpolation::{fuse_pair, FusedEmbeddingPair, FusionStrategy};
use crate::toy::{ToyAsv, ToyEncoder, ToyMelDecoder, ToyTokenGenerator, ToyVocoder};

pub use backend::{
    AsrBackend, AsvEncoder, BackendId, EncoderBackend, MelDecoder, PipelineError, SynthesisOptions,
    TokenGenerator, TokenSequence, Vocoder, DEFAULT_MIN_CLIP_DURATION,
};

/// Everything morphing needs: the two source profiles, the text to speak,
/// the fusion strategy, and the seed that pins all stochastic choices.
#[derive(Debug, Clone)]
pub struct MorphSpec {
    pub source_a: SpeakerProfile,
    pub source_b: SpeakerProfile,
    pub text: String,
    pub strategy: FusionStrategy,
    pub seed: u64,
}

/// Record of how a morph was produced, sufficient to regenerate it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub backends: Vec<BackendId>,
    pub source_ids: (String, String),
    pub strategy: FusionStrategy,
    pub text: String,
    pub seed: u64,
    pub flow_steps: usize,
    pub guidance_scale: f64,
    pub omega_prosody: f64,
    pub omega_timbre: f64,
}

/// A finished morph with every intermediate worth keeping.
#[derive(Debug, Clone)]
pub struct MorphResult {
    pub waveform: Waveform,
    pub fused: FusedEmbeddingPair,
    pub tokens: TokenSequence,
    pub mel: LogMelSpectrogram,
    pub provenance: Provenance,
}

struct StageLock(Option<Mutex<()>>);

impl StageLock {
    fn new(reentrant: bool) -> Self {
        StageLock(if reentrant {
            None
        } else {
            Some(Mutex::new(()))
        })
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        match &self.0 {
            Some(m) => {
                let _guard = m.lock().unwrap_or_else(|p| p.into_inner());
                f()
            }
            None => f(),
        }
    }
}

/// One backend per stage. ASR is optional; without it, evaluation reports a
/// null WER.
pub struct BackendSet {
    encoder: Arc<dyn EncoderBackend>,
    tokens: Arc<dyn TokenGenerator>,
    decoder: Arc<dyn MelDecoder>,
    vocoder: Arc<dyn Vocoder>,
    asv: Arc<dyn AsvEncoder>,
    asr: Option<Arc<dyn AsrBackend>>,
    encoder_lock: StageLock,
    tokens_lock: StageLock,
    decoder_lock: StageLock,
    vocoder_lock: StageLock,
    asv_lock: StageLock,
    asr_lock: StageLock,
}

impl BackendSet {
    pub fn new(
        encoder: Arc<dyn EncoderBackend>,
        tokens: Arc<dyn TokenGenerator>,
        decoder: Arc<dyn MelDecoder>,
        vocoder: Arc<dyn Vocoder>,
        asv: Arc<dyn AsvEncoder>,
        asr: Option<Arc<dyn AsrBackend>>,
    ) -> Self {
        BackendSet {
            encoder_lock: StageLock::new(encoder.reentrant()),
            tokens_lock: StageLock::new(tokens.reentrant()),
            decoder_lock: StageLock::new(decoder.reentrant()),
            vocoder_lock: StageLock::new(vocoder.reentrant()),
            asv_lock: StageLock::new(asv.reentrant()),
            asr_lock: StageLock::new(asr.as_ref().is_none_or(|a| a.reentrant())),
            encoder,
            tokens,
            decoder,
            vocoder,
            asv,
            asr,
        }
    }

    /// The all-toy set used by tests, examples, and default configurations.
    pub fn toy() -> Self {
        Self::new(
            Arc::new(ToyEncoder),
            Arc::new(ToyTokenGenerator),
            Arc::new(ToyMelDecoder),
            Arc::new(ToyVocoder),
            Arc::new(ToyAsv),
            None,
        )
    }

    pub fn has_asr(&self) -> bool {
        self.asr.is_some()
    }

    /// Identities of every configured backend, ASR last when present.
    pub fn backend_ids(&self) -> Vec<BackendId> {
        let mut ids = vec![
            self.encoder.id(),
            self.tokens.id(),
            self.decoder.id(),
            self.vocoder.id(),
            self.asv.id(),
        ];
        if let Some(asr) = &self.asr {
            ids.push(asr.id());
        }
        ids
    }

    pub fn encoder_min_duration(&self) -> f64 {
        self.encoder.min_duration()
    }

    pub fn asv_min_duration(&self) -> f64 {
        self.asv.min_duration()
    }

    pub fn encode(
        &self,
        waveform: &Waveform,
    ) -> Result<(SpeakerEmbedding, SpeakerEmbedding), PipelineError> {
        self.encoder_lock.run(|| self.encoder.extract(waveform))
    }

    pub fn generate_tokens(
        &self,
        text: &str,
        prosody: &crate::interpolation::FusedVector,
        seed: u64,
    ) -> Result<TokenSequence, PipelineError> {
        self.tokens_lock
            .run(|| self.tokens.generate(text, prosody, seed))
    }

    pub fn synthesize_mel(
        &self,
        tokens: &TokenSequence,
        timbre: &crate::interpolation::FusedVector,
        options: &SynthesisOptions,
        seed: u64,
    ) -> Result<LogMelSpectrogram, PipelineError> {
        self.decoder_lock
            .run(|| self.decoder.synthesize(tokens, timbre, options, seed))
    }

    pub fn vocode(&self, mel: &LogMelSpectrogram) -> Result<Waveform, PipelineError> {
        self.vocoder_lock.run(|| self.vocoder.vocode(mel))
    }

    pub fn asv_embed(&self, waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError> {
        self.asv_lock.run(|| self.asv.embed(waveform))
    }

    /// Transcribes with the ASR backend, or returns `None` if there is none.
    pub fn transcribe(&self, waveform: &Waveform) -> Option<Result<String, PipelineError>> {
        self.asr
            .as_ref()
            .map(|asr| self.asr_lock.run(|| asr.transcribe(waveform)))
    }
}

/// Runs the dual encoder on one clip, enforcing the duration floor. The
/// effective floor is the larger of the configured value and what the
/// backend itself requires; `None` uses [`DEFAULT_MIN_CLIP_DURATION`].
pub fn extract_embeddings(
    backends: &BackendSet,
    waveform: &Waveform,
    min_duration: Option<f64>,
) -> Result<(SpeakerEmbedding, SpeakerEmbedding), PipelineError> {
    let floor = min_duration
        .unwrap_or(DEFAULT_MIN_CLIP_DURATION)
        .max(backends.encoder_min_duration());
    if waveform.duration() < floor {
        return Err(PipelineError::TooShort {
            needed: floor,
            got: waveform.duration(),
        });
    }
    backends.encode(waveform)
}

/// Fuses the pair, generates tokens, synthesizes the mel, and vocodes.
/// Errors are tagged with the stage that raised them.
pub fn morph(
    spec: &MorphSpec,
    backends: &BackendSet,
    options: &SynthesisOptions,
) -> Result<MorphResult, PipelineError> {
    if spec.text.trim().is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let fused = fuse_pair(&spec.source_a, &spec.source_b, spec.strategy)
        .map_err(PipelineError::from)
        .map_err(PipelineError::at_stage("fusion"))?;

    let tokens = backends
        .generate_tokens(&spec.text, &fused.prosody, spec.seed)
        .map_err(PipelineError::at_stage("tokens"))?;
    if tokens.is_empty() {
        return Err(PipelineError::ContractViolation {
            stage: "tokens".into(),
            message: "empty token sequence for non-empty text".into(),
        });
    }

    let mel = backends
        .synthesize_mel(&tokens, &fused.timbre, options, spec.seed)
        .map_err(PipelineError::at_stage("decoder"))?;

    let waveform = backends
        .vocode(&mel)
        .map_err(PipelineError::at_stage("vocoder"))?;
    if waveform.sample_rate() != CANONICAL_RATE {
        return Err(PipelineError::ContractViolation {
            stage: "vocoder".into(),
            message: format!(
                "expected canonical rate {CANONICAL_RATE}, got {}",
                waveform.sample_rate()
            ),
        });
    }

    let provenance = Provenance {
        backends: backends.backend_ids(),
        source_ids: fused.source_ids.clone(),
        strategy: spec.strategy,
        text: spec.text.clone(),
        seed: spec.seed,
        flow_steps: options.flow_steps,
        guidance_scale: options.guidance_scale,
        omega_prosody: fused.omega_prosody,
        omega_timbre: fused.omega_timbre,
    };
    Ok(MorphResult {
        waveform,
        fused,
        tokens,
        mel,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, EmbeddingKind, Gender};
    use crate::interpolation::FusionMethod;
    use crate::toy::voice::ToyVoice;

    fn profile_from_voice(voice: &ToyVoice) -> SpeakerProfile {
        SpeakerProfile::from_embeddings(
            voice.speaker_id.clone(),
            voice.gender,
            voice.prosody_embedding(),
            voice.timbre_embedding(),
        )
        .unwrap()
    }

    fn spec_for(a: &ToyVoice, b: &ToyVoice, strategy: FusionStrategy) -> MorphSpec {
        MorphSpec {
            source_a: profile_from_voice(a),
            source_b: profile_from_voice(b),
            text: "a sentence with enough words to fill several syllables".into(),
            strategy,
            seed: 424242,
        }
    }

    #[test]
    fn morph_is_bit_deterministic() {
        let a = ToyVoice::sample("200", Gender::Male, 1);
        let b = ToyVoice::sample("201", Gender::Male, 1);
        let backends = BackendSet::toy();
        let options = SynthesisOptions::default();
        let spec = spec_for(&a, &b, FusionStrategy::default());
        let r1 = morph(&spec, &backends, &options).unwrap();
        let r2 = morph(&spec, &backends, &options).unwrap();
        assert_eq!(r1.waveform.samples(), r2.waveform.samples());
        assert_eq!(r1.mel.data(), r2.mel.data());
        assert_eq!(r1.tokens, r2.tokens);
        assert_eq!(
            r1.provenance.source_ids,
            ("200".to_owned(), "201".to_owned())
        );
    }

    #[test]
    fn seed_changes_the_waveform() {
        let a = ToyVoice::sample("202", Gender::Female, 2);
        let b = ToyVoice::sample("203", Gender::Female, 2);
        let backends = BackendSet::toy();
        let options = SynthesisOptions::default();
        let mut spec = spec_for(&a, &b, FusionStrategy::default());
        let r1 = morph(&spec, &backends, &options).unwrap();
        spec.seed += 1;
        let r2 = morph(&spec, &backends, &options).unwrap();
        assert_ne!(r1.waveform.samples(), r2.waveform.samples());
    }

    #[test]
    fn alpha_zero_clones_speaker_a() {
        let a = ToyVoice::sample("210", Gender::Male, 3);
        let b = ToyVoice::sample("211", Gender::Male, 3);
        let backends = BackendSet::toy();
        let strategy = FusionStrategy::new(FusionMethod::Slerp, FusionMethod::Slerp, 0.0).unwrap();
        let spec = spec_for(&a, &b, strategy);
        let result = morph(&spec, &backends, &SynthesisOptions::default()).unwrap();
        let measured = backends.asv_embed(&result.waveform).unwrap();
        let cos = cosine_similarity(&measured, &a.timbre_embedding()).unwrap();
        assert!(cos >= 0.99, "alpha 0 should clone speaker a, cosine {cos}");
    }

    #[test]
    fn midpoint_of_orthogonal_timbres_sits_on_the_geodesic() {
        let mut low = vec![0.0; 16];
        let mut high = vec![0.0; 16];
        for k in 0..8 {
            low[k] = 1.0;
            high[k + 8] = 1.0;
        }
        let prosody = SpeakerEmbedding::new(
            EmbeddingKind::Prosody,
            vec![0.4, 0.3, 0.5, 0.7, 0.4, 0.5, 0.1, 1.0],
        )
        .unwrap();
        let pa = SpeakerProfile::from_embeddings(
            "odd",
            Gender::Male,
            prosody.clone(),
            SpeakerEmbedding::new(EmbeddingKind::Timbre, low).unwrap(),
        )
        .unwrap();
        let pb = SpeakerProfile::from_embeddings(
            "even",
            Gender::Male,
            prosody,
            SpeakerEmbedding::new(EmbeddingKind::Timbre, high).unwrap(),
        )
        .unwrap();
        let spec = MorphSpec {
            source_a: pa.clone(),
            source_b: pb.clone(),
            text: "plenty of spoken syllables land in this phrase".into(),
            strategy: FusionStrategy::default(),
            seed: 7,
        };
        let backends = BackendSet::toy();
        let result = morph(&spec, &backends, &SynthesisOptions::default()).unwrap();
        assert!((result.provenance.omega_timbre - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        let measured = backends.asv_embed(&result.waveform).unwrap();
        let target = std::f64::consts::FRAC_PI_4.cos();
        for profile in [&pa, &pb] {
            let cos = cosine_similarity(&measured, profile.timbre()).unwrap();
            assert!(
                (cos - target).abs() <= 0.05,
                "{}: cosine {cos}, expected {target} give or take 0.05",
                profile.speaker_id
            );
        }
    }

    #[test]
    fn empty_text_is_rejected() {
        let a = ToyVoice::sample("220", Gender::Male, 4);
        let b = ToyVoice::sample("221", Gender::Male, 4);
        let mut spec = spec_for(&a, &b, FusionStrategy::default());
        spec.text = "   ".into();
        let err = morph(&spec, &BackendSet::toy(), &SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::EmptyText));
    }

    #[test]
    fn stage_failures_name_their_stage() {
        let a = ToyVoice::sample("230", Gender::Male, 5);
        let prosody = a.prosody_embedding();
        let bad_timbre =
            SpeakerEmbedding::new(EmbeddingKind::Timbre, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let profile =
            SpeakerProfile::from_embeddings("230", Gender::Male, prosody, bad_timbre).unwrap();
        let spec = MorphSpec {
            source_a: profile.clone(),
            source_b: profile,
            text: "words".into(),
            strategy: FusionStrategy::default(),
            seed: 0,
        };
        let err = morph(&spec, &BackendSet::toy(), &SynthesisOptions::default()).unwrap_err();
        match err {
            PipelineError::StageFailed { stage, .. } => assert_eq!(stage, "decoder"),
            other => panic!("expected a stage-tagged error, got {other}"),
        }
    }

    #[test]
    fn extraction_enforces_the_configured_floor() {
        let voice = ToyVoice::sample("240", Gender::Female, 6);
        let clip = crate::toy::render_clip(&voice, "just a couple of words here now", 1);
        assert!(clip.duration() > 2.0 && clip.duration() < 5.0);
        let backends = BackendSet::toy();
        let err = extract_embeddings(&backends, &clip, None).unwrap_err();
        match err {
            PipelineError::TooShort { needed, .. } => assert_eq!(needed, 5.0),
            other => panic!("expected TooShort, got {other}"),
        }
        let (prosody, timbre) = extract_embeddings(&backends, &clip, Some(0.5)).unwrap();
        assert_eq!(prosody.kind(), EmbeddingKind::Prosody);
        assert_eq!(timbre.kind(), EmbeddingKind::Timbre);
    }
}
