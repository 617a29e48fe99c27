//! Backends that live in external executables, spawned once per call.
//!
//! The wire contract is file based: inputs are written to a scratch
//! directory, the tool is invoked with explicit flag arguments, and outputs
//! are read back. One subcommand per stage:
//!
//! ```text
//! <exe> encode     --wav IN.wav --prosody-out P.emb --timbre-out T.emb
//! <exe> tokens     --text-file T.txt --prosody P.json --seed N --out TOK.json
//! <exe> mel        --tokens TOK.json --timbre T.json --steps N --guidance G --seed N --out M.mel
//! <exe> vocode     --mel M.mel --out OUT.wav
//! <exe> asv-embed  --wav IN.wav --out E.emb
//! <exe> transcribe --wav IN.wav --out T.txt
//! ```
//!
//! Embeddings use the `.emb` + `.meta` pair from [`crate::embedding`],
//! fused vectors and token sequences are JSON, mels use the binary format
//! from [`crate::audio::mel`]. A nonzero exit status becomes a backend
//! error carrying the tool's stderr.
//!
//! Which implementation fills each stage comes from a TOML manifest:
//!
//! ```toml
//! [[backend]]
//! stage = "encoder"          # encoder | tokens | decoder | vocoder | asv | asr
//! kind = "executable"        # or "toy"
//! name = "my-encoder"
//! version = "0.3"
//! path = "tools/encoder"     # resolved against the manifest's directory
//! prosody_dim = 8
//! timbre_dim = 16
//! min_duration = 0.5
//! reentrant = false
//! ```
//!
//! Stages without an entry default to the toy backend; ASR defaults to
//! absent.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use serde::Deserialize;

use crate::audio::mel::{read_mel, write_mel, LogMelSpectrogram};
use crate::audio::wav::{read_wav, write_wav};
use crate::audio::Waveform;
use crate::embedding::{read_embedding, EmbeddingKind, SpeakerEmbedding};
use crate::interpolation::FusedVector;
use crate::pipeline::backend::{
    AsrBackend, AsvEncoder, BackendId, EncoderBackend, MelDecoder, PipelineError, SynthesisOptions,
    TokenGenerator, TokenSequence, Vocoder,
};
use crate::pipeline::BackendSet;
use crate::toy::{ToyAsv, ToyEncoder, ToyMelDecoder, ToyTokenGenerator, ToyVocoder};

/// Serialized form of a token sequence on the wire.
#[derive(Debug, serde::Serialize, Deserialize)]
struct TokenFile {
    tokens: Vec<u32>,
    vocab_size: u32,
}

/// Writes a token sequence as JSON.
pub fn write_token_file(path: &Path, tokens: &TokenSequence) -> Result<(), PipelineError> {
    let file = TokenFile {
        tokens: tokens.tokens().to_vec(),
        vocab_size: tokens.vocab_size(),
    };
    let body = serde_json::to_string(&file).expect("token file serializes");
    fs::write(path, body).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a JSON token sequence, re-validating the vocabulary bound.
pub fn read_token_file(path: &Path, stage: &str) -> Result<TokenSequence, PipelineError> {
    let body = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: TokenFile =
        serde_json::from_str(&body).map_err(|e| PipelineError::ContractViolation {
            stage: stage.to_owned(),
            message: format!("malformed token file {}: {e}", path.display()),
        })?;
    TokenSequence::new(file.tokens, file.vocab_size)
}

/// Writes a fused vector as JSON.
pub fn write_fused_file(path: &Path, fused: &FusedVector) -> Result<(), PipelineError> {
    let body = serde_json::to_string(fused).expect("fused vector serializes");
    fs::write(path, body).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a JSON fused vector.
pub fn read_fused_file(path: &Path, stage: &str) -> Result<FusedVector, PipelineError> {
    let body = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&body).map_err(|e| PipelineError::ContractViolation {
        stage: stage.to_owned(),
        message: format!("malformed fused vector {}: {e}", path.display()),
    })
}

/// Location and identity of one external tool.
#[derive(Debug, Clone)]
struct ExeSpec {
    stage: String,
    name: String,
    version: String,
    path: PathBuf,
    reentrant: bool,
}

impl ExeSpec {
    fn id(&self) -> BackendId {
        BackendId::new(&self.stage, &self.name, &self.version)
    }

    fn scratch(&self) -> Result<tempfile::TempDir, PipelineError> {
        tempfile::Builder::new()
            .prefix("voxmorph-backend-")
            .tempdir()
            .map_err(|e| PipelineError::Backend {
                stage: self.stage.clone(),
                message: format!("cannot create scratch directory: {e}"),
            })
    }

    fn run(&self, args: &[&str]) -> Result<(), PipelineError> {
        let output =
            Command::new(&self.path)
                .args(args)
                .output()
                .map_err(|e| PipelineError::Backend {
                    stage: self.stage.clone(),
                    message: format!("failed to launch {}: {e}", self.path.display()),
                })?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let head: String = stderr.chars().take(500).collect();
            return Err(PipelineError::Backend {
                stage: self.stage.clone(),
                message: format!(
                    "{} failed ({}): {}",
                    self.path.display(),
                    output.status,
                    head.trim()
                ),
            });
        }
        Ok(())
    }
}

fn wav_in(dir: &Path, waveform: &Waveform, stage: &str) -> Result<PathBuf, PipelineError> {
    let path = dir.join("input.wav");
    write_wav(waveform, &path).map_err(|e| PipelineError::Backend {
        stage: stage.to_owned(),
        message: format!("cannot stage input wav: {e}"),
    })?;
    Ok(path)
}

/// A dual encoder in an external executable.
pub struct ExternalEncoder {
    spec: ExeSpec,
    prosody_dim: usize,
    timbre_dim: usize,
    min_duration: f64,
}

impl EncoderBackend for ExternalEncoder {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn prosody_dim(&self) -> usize {
        self.prosody_dim
    }

    fn timbre_dim(&self) -> usize {
        self.timbre_dim
    }

    fn min_duration(&self) -> f64 {
        self.min_duration
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn extract(
        &self,
        waveform: &Waveform,
    ) -> Result<(SpeakerEmbedding, SpeakerEmbedding), PipelineError> {
        if waveform.duration() < self.min_duration {
            return Err(PipelineError::TooShort {
                needed: self.min_duration,
                got: waveform.duration(),
            });
        }
        let dir = self.spec.scratch()?;
        let wav = wav_in(dir.path(), waveform, &self.spec.stage)?;
        let p_out = dir.path().join("prosody.emb");
        let t_out = dir.path().join("timbre.emb");
        self.spec.run(&[
            "encode",
            "--wav",
            wav.to_str().unwrap(),
            "--prosody-out",
            p_out.to_str().unwrap(),
            "--timbre-out",
            t_out.to_str().unwrap(),
        ])?;
        let (prosody, _) = read_embedding(&p_out)?;
        let (timbre, _) = read_embedding(&t_out)?;
        for (got, want, label) in [
            (prosody.kind(), EmbeddingKind::Prosody, "prosody"),
            (timbre.kind(), EmbeddingKind::Timbre, "timbre"),
        ] {
            if got != want {
                return Err(PipelineError::ContractViolation {
                    stage: self.spec.stage.clone(),
                    message: format!("{label} output has kind {got}"),
                });
            }
        }
        for (got, want, label) in [
            (prosody.dim(), self.prosody_dim, "prosody"),
            (timbre.dim(), self.timbre_dim, "timbre"),
        ] {
            if got != want {
                return Err(PipelineError::ContractViolation {
                    stage: self.spec.stage.clone(),
                    message: format!("{label} dim {got}, manifest declares {want}"),
                });
            }
        }
        Ok((prosody, timbre))
    }
}

/// A token generator in an external executable.
pub struct ExternalTokenGenerator {
    spec: ExeSpec,
    vocab_size: u32,
}

impl TokenGenerator for ExternalTokenGenerator {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn generate(
        &self,
        text: &str,
        prosody: &FusedVector,
        seed: u64,
    ) -> Result<TokenSequence, PipelineError> {
        let dir = self.spec.scratch()?;
        let text_path = dir.path().join("text.txt");
        fs::write(&text_path, text).map_err(|source| PipelineError::Io {
            path: text_path.clone(),
            source,
        })?;
        let prosody_path = dir.path().join("prosody.json");
        write_fused_file(&prosody_path, prosody)?;
        let out = dir.path().join("tokens.json");
        self.spec.run(&[
            "tokens",
            "--text-file",
            text_path.to_str().unwrap(),
            "--prosody",
            prosody_path.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        let tokens = read_token_file(&out, &self.spec.stage)?;
        if tokens.vocab_size() != self.vocab_size {
            return Err(PipelineError::ContractViolation {
                stage: self.spec.stage.clone(),
                message: format!(
                    "tool produced vocab {}, manifest declares {}",
                    tokens.vocab_size(),
                    self.vocab_size
                ),
            });
        }
        Ok(tokens)
    }
}

/// A mel decoder in an external executable.
pub struct ExternalMelDecoder {
    spec: ExeSpec,
}

impl MelDecoder for ExternalMelDecoder {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn synthesize(
        &self,
        tokens: &TokenSequence,
        timbre: &FusedVector,
        options: &SynthesisOptions,
        seed: u64,
    ) -> Result<LogMelSpectrogram, PipelineError> {
        let dir = self.spec.scratch()?;
        let tokens_path = dir.path().join("tokens.json");
        write_token_file(&tokens_path, tokens)?;
        let timbre_path = dir.path().join("timbre.json");
        write_fused_file(&timbre_path, timbre)?;
        let out = dir.path().join("out.mel");
        self.spec.run(&[
            "mel",
            "--tokens",
            tokens_path.to_str().unwrap(),
            "--timbre",
            timbre_path.to_str().unwrap(),
            "--steps",
            &options.flow_steps.to_string(),
            "--guidance",
            &options.guidance_scale.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        Ok(read_mel(&out)?)
    }
}

/// A vocoder in an external executable.
pub struct ExternalVocoder {
    spec: ExeSpec,
}

impl Vocoder for ExternalVocoder {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn vocode(&self, mel: &LogMelSpectrogram) -> Result<Waveform, PipelineError> {
        let dir = self.spec.scratch()?;
        let mel_path = dir.path().join("input.mel");
        write_mel(mel, &mel_path)?;
        let out = dir.path().join("out.wav");
        self.spec.run(&[
            "vocode",
            "--mel",
            mel_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        Ok(read_wav(&out)?)
    }
}

/// A verification encoder in an external executable.
pub struct ExternalAsv {
    spec: ExeSpec,
    min_duration: f64,
}

impl AsvEncoder for ExternalAsv {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn min_duration(&self) -> f64 {
        self.min_duration
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn embed(&self, waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError> {
        if waveform.duration() < self.min_duration {
            return Err(PipelineError::TooShort {
                needed: self.min_duration,
                got: waveform.duration(),
            });
        }
        let dir = self.spec.scratch()?;
        let wav = wav_in(dir.path(), waveform, &self.spec.stage)?;
        let out = dir.path().join("embedding.emb");
        self.spec.run(&[
            "asv-embed",
            "--wav",
            wav.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        let (embedding, _) = read_embedding(&out)?;
        Ok(embedding)
    }
}

/// A speech recognizer in an external executable.
pub struct ExternalAsr {
    spec: ExeSpec,
}

impl AsrBackend for ExternalAsr {
    fn id(&self) -> BackendId {
        self.spec.id()
    }

    fn reentrant(&self) -> bool {
        self.spec.reentrant
    }

    fn transcribe(&self, waveform: &Waveform) -> Result<String, PipelineError> {
        let dir = self.spec.scratch()?;
        let wav = wav_in(dir.path(), waveform, &self.spec.stage)?;
        let out = dir.path().join("transcript.txt");
        self.spec.run(&[
            "transcribe",
            "--wav",
            wav.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        fs::read_to_string(&out)
            .map(|s| s.trim().to_owned())
            .map_err(|source| PipelineError::Io { path: out, source })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    stage: String,
    kind: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    version: Option<String>,
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    prosody_dim: Option<usize>,
    #[serde(default)]
    timbre_dim: Option<usize>,
    #[serde(default)]
    vocab_size: Option<u32>,
    #[serde(default)]
    min_duration: Option<f64>,
    #[serde(default = "default_true")]
    reentrant: bool,
}

#[derive(Debug, Default, Deserialize)]
struct ManifestFile {
    #[serde(default)]
    backend: Vec<ManifestEntry>,
}

const STAGES: [&str; 6] = ["encoder", "tokens", "decoder", "vocoder", "asv", "asr"];

fn manifest_err(message: String) -> PipelineError {
    PipelineError::Backend {
        stage: "manifest".into(),
        message,
    }
}

impl ManifestEntry {
    fn exe_spec(&self, base: &Path) -> Result<ExeSpec, PipelineError> {
        let raw = self.path.as_ref().ok_or_else(|| {
            manifest_err(format!(
                "stage {} needs a path for kind executable",
                self.stage
            ))
        })?;
        let path = if raw.is_absolute() {
            raw.clone()
        } else {
            base.join(raw)
        };
        Ok(ExeSpec {
            stage: self.stage.clone(),
            name: self
                .name
                .clone()
                .unwrap_or_else(|| format!("external-{}", self.stage)),
            version: self.version.clone().unwrap_or_else(|| "0".into()),
            path,
            reentrant: self.reentrant,
        })
    }
}

/// Builds a [`BackendSet`] from manifest TOML. `base` anchors relative
/// executable paths. Unlisted stages fall back to the toy backend.
pub fn backend_set_from_toml(text: &str, base: &Path) -> Result<BackendSet, PipelineError> {
    let manifest: ManifestFile =
        toml::from_str(text).map_err(|e| manifest_err(format!("bad manifest TOML: {e}")))?;

    for entry in &manifest.backend {
        if !STAGES.contains(&entry.stage.as_str()) {
            return Err(manifest_err(format!("unknown stage {:?}", entry.stage)));
        }
        if entry.kind != "toy" && entry.kind != "executable" {
            return Err(manifest_err(format!(
                "stage {}: unknown kind {:?}",
                entry.stage, entry.kind
            )));
        }
    }
    for stage in STAGES {
        if manifest.backend.iter().filter(|e| e.stage == stage).count() > 1 {
            return Err(manifest_err(format!("stage {stage} is declared twice")));
        }
    }
    let find = |stage: &str| manifest.backend.iter().find(|e| e.stage == stage);

    let encoder: Arc<dyn EncoderBackend> = match find("encoder") {
        Some(e) if e.kind == "executable" => Arc::new(ExternalEncoder {
            spec: e.exe_spec(base)?,
            prosody_dim: e.prosody_dim.unwrap_or(8),
            timbre_dim: e.timbre_dim.unwrap_or(16),
            min_duration: e
                .min_duration
                .unwrap_or(crate::toy::backends::TOY_MIN_DURATION),
        }),
        _ => Arc::new(ToyEncoder),
    };
    let tokens: Arc<dyn TokenGenerator> = match find("tokens") {
        Some(e) if e.kind == "executable" => Arc::new(ExternalTokenGenerator {
            spec: e.exe_spec(base)?,
            vocab_size: e.vocab_size.unwrap_or(crate::toy::backends::TOY_VOCAB),
        }),
        _ => Arc::new(ToyTokenGenerator),
    };
    let decoder: Arc<dyn MelDecoder> = match find("decoder") {
        Some(e) if e.kind == "executable" => Arc::new(ExternalMelDecoder {
            spec: e.exe_spec(base)?,
        }),
        _ => Arc::new(ToyMelDecoder),
    };
    let vocoder: Arc<dyn Vocoder> = match find("vocoder") {
        Some(e) if e.kind == "executable" => Arc::new(ExternalVocoder {
            spec: e.exe_spec(base)?,
        }),
        _ => Arc::new(ToyVocoder),
    };
    let asv: Arc<dyn AsvEncoder> = match find("asv") {
        Some(e) if e.kind == "executable" => Arc::new(ExternalAsv {
            spec: e.exe_spec(base)?,
            min_duration: e
                .min_duration
                .unwrap_or(crate::toy::backends::TOY_MIN_DURATION),
        }),
        _ => Arc::new(ToyAsv),
    };
    let asr: Option<Arc<dyn AsrBackend>> = match find("asr") {
        Some(e) if e.kind == "executable" => Some(Arc::new(ExternalAsr {
            spec: e.exe_spec(base)?,
        })),
        _ => None,
    };
    Ok(BackendSet::new(encoder, tokens, decoder, vocoder, asv, asr))
}

/// Loads a backend manifest file.
pub fn load_backend_set(path: &Path) -> Result<BackendSet, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    backend_set_from_toml(&text, base)
}
