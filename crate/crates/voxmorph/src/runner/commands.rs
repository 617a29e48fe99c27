//! The commands behind the CLI verbs: ingest, morph, calibrate, evaluate,
//! ablate, and report. Each one opens the run directory named by the
//! config, checks its preconditions, and emits artifacts atomically, so any
//! command can be interrupted and replayed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::rundir::{write_atomic, write_wav_atomic, RunDirectory};
use super::RunnerError;
use crate::asv::{self, ThresholdTable};
use crate::audio::mel::MelConfig;
use crate::audio::wav::read_wav;
use crate::audio::Waveform;
use crate::embedding::{write_embedding, ClipRef, EmbeddingMeta, SpeakerEmbedding, SpeakerProfile};
use crate::interpolation::FusionStrategy;
use crate::manifest::{self, CorpusManifest, MorphPairList, Protocol};
use crate::metrics::{
    self,
    report::{far_key, render_ablation_table},
    MetricReport,
};
use crate::pipeline::{
    extract_embeddings, morph, BackendSet, MorphSpec, Provenance, SynthesisOptions,
};
use crate::seeding::derive_seed;

/// Directory and file label for one fusion strategy, e.g. `slerp-a0.5`.
pub fn strategy_label(strategy: &FusionStrategy) -> String {
    let method = if strategy.prosody_method == strategy.timbre_method {
        strategy.prosody_method.to_string()
    } else {
        format!("{}+{}", strategy.prosody_method, strategy.timbre_method)
    };
    format!("{method}-a{}", strategy.alpha)
}

fn load_manifest(dir: &RunDirectory) -> Result<CorpusManifest, RunnerError> {
    let path = dir.manifest_file();
    if !path.exists() {
        return Err(RunnerError::Data(format!(
            "no manifest at {}; run `voxmorph ingest` first",
            path.display()
        )));
    }
    Ok(manifest::read_manifest(&path)?)
}

/// Writes through a sibling temp file for writers that take a path.
fn persist_via(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), RunnerError>,
) -> Result<(), RunnerError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| RunnerError::io(path.to_path_buf(), e))?;
    write(tmp.path())?;
    tmp.persist(path)
        .map_err(|e| RunnerError::io(path.to_path_buf(), e.error))?;
    Ok(())
}

fn file_digest(path: &Path) -> Result<String, RunnerError> {
    let bytes = fs::read(path).map_err(|e| RunnerError::io(path.to_path_buf(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Debug)]
pub struct IngestSummary {
    pub n_speakers: usize,
    pub n_with_audio: usize,
    pub n_utterances: usize,
    /// Unreadable audio files, with the reason each was skipped.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Walks the corpus into `manifest.jsonl`. Refuses to overwrite an existing
/// manifest unless `force`.
pub fn cmd_ingest(config: &RunConfig, force: bool) -> Result<IngestSummary, RunnerError> {
    let dir = RunDirectory::open_or_init(config, force)?;
    let target = dir.manifest_file();
    if target.exists() && !force {
        return Err(RunnerError::Data(format!(
            "manifest already exists at {}; pass --force to re-ingest",
            target.display()
        )));
    }
    let report = manifest::ingest(&config.corpus_root, &config.speakers_file_path())?;
    persist_via(&target, |tmp| {
        manifest::write_manifest(&report.manifest, tmp).map_err(Into::into)
    })?;
    Ok(IngestSummary {
        n_speakers: report.manifest.speakers.len(),
        n_with_audio: report.manifest.speakers_with_audio().len(),
        n_utterances: report.manifest.utterances.len(),
        skipped: report.skipped,
    })
}

/// Loads the sampled pair list, or samples and writes it on first use.
/// `force` resamples unconditionally.
fn ensure_pairs(
    config: &RunConfig,
    dir: &RunDirectory,
    manifest: &CorpusManifest,
    force: bool,
) -> Result<MorphPairList, RunnerError> {
    let path = dir.pairs_file();
    if path.exists() && !force {
        let pairs = manifest::read_pairs(&path)?;
        if pairs.seed != config.seed
            || pairs.gender_constraint != config.same_gender
            || pairs.pairs.len() != config.n_pairs
        {
            return Err(RunnerError::Data(format!(
                "{} was sampled with different parameters than the config; \
                 pass --force to resample",
                path.display()
            )));
        }
        return Ok(pairs);
    }
    let pairs = manifest::sample_pairs(manifest, config.n_pairs, config.seed, config.same_gender)?;
    persist_via(&path, |tmp| {
        manifest::write_pairs(&pairs, tmp).map_err(Into::into)
    })?;
    Ok(pairs)
}

/// Reads one speaker's protocol clips and builds their source profile.
fn build_profile(
    config: &RunConfig,
    backends: &BackendSet,
    manifest: &CorpusManifest,
    speaker_id: &str,
) -> Result<SpeakerProfile, RunnerError> {
    let clip_ids = manifest::select_clips(manifest, speaker_id, config.protocol, config.seed)?;
    let record = manifest
        .speaker(speaker_id)
        .expect("select_clips validated the speaker");
    // The 5 s default floor is the v1 eligibility bound; v2 admits shorter
    // clips, bounded only by what the encoder itself needs.
    let floor = match config.protocol {
        Protocol::V1 => None,
        Protocol::V2 => Some(0.0),
    };
    let mut clips = Vec::with_capacity(clip_ids.len());
    let mut prosody = Vec::with_capacity(clip_ids.len());
    let mut timbre = Vec::with_capacity(clip_ids.len());
    for clip_id in &clip_ids {
        let utt = manifest
            .utterance(clip_id)
            .expect("select_clips returned a manifest clip");
        let wave = read_wav(&utt.path)?;
        let (p, t) = extract_embeddings(backends, &wave, floor)?;
        clips.push(ClipRef {
            clip_id: clip_id.clone(),
            duration: utt.duration,
        });
        prosody.push(p);
        timbre.push(t);
    }
    Ok(SpeakerProfile::new(
        speaker_id,
        record.gender,
        clips,
        prosody,
        timbre,
    )?)
}

/// Writes a profile's aggregated embeddings under `embeddings/` for
/// inspection. Never read back: profiles are recomputed from audio so that
/// resumed runs match fresh ones bit for bit (the f32 file format rounds).
fn write_profile_artifacts(
    dir: &RunDirectory,
    backends: &BackendSet,
    profile: &SpeakerProfile,
) -> Result<(), RunnerError> {
    let encoder = &backends.backend_ids()[0];
    for (embedding, tag) in [(profile.prosody(), "prosody"), (profile.timbre(), "timbre")] {
        let path = dir
            .embeddings_dir()
            .join(format!("{}.{tag}.emb", profile.speaker_id));
        let meta = EmbeddingMeta {
            kind: embedding.kind(),
            dim: embedding.dim(),
            speaker_id: profile.speaker_id.clone(),
            clip_id: "aggregate".to_owned(),
            encoder_name: encoder.name.clone(),
            encoder_version: encoder.version.clone(),
        };
        write_embedding(&path, embedding, &meta)?;
    }
    Ok(())
}

struct MorphJob {
    a: String,
    b: String,
    strategy: FusionStrategy,
    seed: u64,
    wav: PathBuf,
    json: PathBuf,
}

impl MorphJob {
    fn describe(&self) -> String {
        if self.a == self.b {
            format!("clone {}", self.a)
        } else {
            format!("pair {}-{}", self.a, self.b)
        }
    }

    /// True when both artifacts exist and the provenance record matches
    /// this job's inputs, so the outputs are exactly what a rerun would
    /// produce.
    fn is_complete(&self, text: &str, options: &SynthesisOptions) -> bool {
        if !self.wav.exists() {
            return false;
        }
        let Ok(body) = fs::read_to_string(&self.json) else {
            return false;
        };
        let Ok(prov) = serde_json::from_str::<Provenance>(&body) else {
            return false;
        };
        prov.seed == self.seed
            && prov.strategy == self.strategy
            && prov.text == text
            && prov.flow_steps == options.flow_steps
            && prov.guidance_scale == options.guidance_scale
            && prov.source_ids.0 == self.a
            && prov.source_ids.1 == self.b
    }
}

fn morph_artifact_paths(dir: &RunDirectory, label: &str, a: &str, b: &str) -> (PathBuf, PathBuf) {
    let base = dir.morph_dir(label).join(format!("{a}-{b}"));
    (base.with_extension("wav"), base.with_extension("json"))
}

fn clone_artifact_paths(dir: &RunDirectory, speaker: &str) -> (PathBuf, PathBuf) {
    let base = dir.clones_dir().join(speaker);
    (base.with_extension("wav"), base.with_extension("json"))
}

#[derive(Debug)]
pub struct MorphSummary {
    pub label: String,
    /// Pair morphs plus single-source clones.
    pub n_jobs: usize,
    pub generated: usize,
    pub skipped: usize,
    /// Failed jobs as (job description, error message).
    pub failures: Vec<(String, String)>,
}

/// Morphs every sampled pair under one strategy, plus one single-source
/// clone per involved speaker. Completed jobs are skipped, failed jobs are
/// tallied against the failure budget.
fn run_morph_batch(
    config: &RunConfig,
    dir: &RunDirectory,
    backends: &BackendSet,
    manifest: &CorpusManifest,
    pairs: &MorphPairList,
    strategy: FusionStrategy,
) -> Result<MorphSummary, RunnerError> {
    let label = strategy_label(&strategy);
    for sub in [dir.morph_dir(&label), dir.clones_dir()] {
        fs::create_dir_all(&sub).map_err(|e| RunnerError::io(sub.clone(), e))?;
    }

    let speakers: BTreeSet<&str> = pairs
        .pairs
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let mut profiles: BTreeMap<&str, Result<SpeakerProfile, String>> = BTreeMap::new();
    for &id in &speakers {
        let profile = build_profile(config, backends, manifest, id);
        if let Ok(p) = &profile {
            write_profile_artifacts(dir, backends, p)?;
        }
        profiles.insert(id, profile.map_err(|e| e.to_string()));
    }

    let mut jobs: Vec<MorphJob> = pairs
        .pairs
        .iter()
        .map(|(a, b)| {
            let (wav, json) = morph_artifact_paths(dir, &label, a, b);
            MorphJob {
                a: a.clone(),
                b: b.clone(),
                strategy,
                seed: derive_seed(config.seed, &["pair", a, b]),
                wav,
                json,
            }
        })
        .collect();
    // Clones condition on a single speaker, so the fusion strategy cannot
    // matter; pinning the default keeps them shareable across strategies.
    for &id in &speakers {
        let (wav, json) = clone_artifact_paths(dir, id);
        jobs.push(MorphJob {
            a: id.to_owned(),
            b: id.to_owned(),
            strategy: FusionStrategy::default(),
            seed: derive_seed(config.seed, &["clone", id]),
            wav,
            json,
        });
    }

    let options = config.synthesis_options();
    let text = config.morph_text();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| RunnerError::Usage(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Result<bool, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                if job.is_complete(text, &options) {
                    return Ok(false);
                }
                let source = |id: &str| {
                    profiles
                        .get(id)
                        .expect("jobs only reference sampled speakers")
                        .clone()
                        .map_err(|e| format!("profile for {id}: {e}"))
                };
                let spec = MorphSpec {
                    source_a: source(&job.a)?,
                    source_b: source(&job.b)?,
                    text: text.to_owned(),
                    strategy: job.strategy,
                    seed: job.seed,
                };
                let result = morph(&spec, backends, &options).map_err(|e| e.to_string())?;
                write_wav_atomic(&result.waveform, &job.wav).map_err(|e| e.to_string())?;
                let body = serde_json::to_string_pretty(&result.provenance)
                    .expect("provenance serializes")
                    + "\n";
                write_atomic(&job.json, body.as_bytes()).map_err(|e| e.to_string())?;
                Ok(true)
            })
            .collect()
    });

    let mut summary = MorphSummary {
        label,
        n_jobs: jobs.len(),
        generated: 0,
        skipped: 0,
        failures: Vec::new(),
    };
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(true) => summary.generated += 1,
            Ok(false) => summary.skipped += 1,
            Err(message) => summary.failures.push((job.describe(), message)),
        }
    }
    let failed = summary.failures.len();
    if failed as f64 > config.failure_budget * summary.n_jobs as f64 {
        let head: Vec<String> = summary
            .failures
            .iter()
            .take(3)
            .map(|(what, why)| format!("{what}: {why}"))
            .collect();
        return Err(RunnerError::Backend(format!(
            "{failed} of {} morph jobs failed, over the {:.0}% budget; first failures: {}",
            summary.n_jobs,
            config.failure_budget * 100.0,
            head.join("; "),
        )));
    }
    Ok(summary)
}

/// Generates the configured strategy's morphs. `force` regenerates from
/// scratch; otherwise completed jobs are skipped.
pub fn cmd_morph(config: &RunConfig, force: bool) -> Result<MorphSummary, RunnerError> {
    let dir = RunDirectory::open_or_init(config, force)?;
    let manifest = load_manifest(&dir)?;
    let backends = config.load_backends()?;
    let pairs = ensure_pairs(config, &dir, &manifest, force)?;
    if force {
        for sub in [
            dir.morph_dir(&strategy_label(&config.fusion)),
            dir.clones_dir(),
        ] {
            if sub.exists() {
                fs::remove_dir_all(&sub).map_err(|e| RunnerError::io(sub.clone(), e))?;
            }
        }
    }
    run_morph_batch(config, &dir, &backends, &manifest, &pairs, config.fusion)
}

/// One speaker's verification-space reference material.
struct AsvReference {
    /// Renormalized mean of the per-clip embeddings; the verification
    /// enrollment.
    aggregate: SpeakerEmbedding,
    per_clip: Vec<SpeakerEmbedding>,
    first_clip: PathBuf,
}

fn mean_embedding(embeddings: &[SpeakerEmbedding]) -> Result<SpeakerEmbedding, RunnerError> {
    let first = &embeddings[0];
    let mut values = vec![0.0; first.dim()];
    for e in embeddings {
        for (acc, v) in values.iter_mut().zip(e.values()) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v /= embeddings.len() as f64;
    }
    Ok(SpeakerEmbedding::new(first.kind(), values)?)
}

/// Embeds each speaker's protocol clips with the verification encoder.
fn asv_references(
    config: &RunConfig,
    backends: &BackendSet,
    manifest: &CorpusManifest,
    speakers: impl IntoIterator<Item = String>,
) -> Result<BTreeMap<String, AsvReference>, RunnerError> {
    let mut refs = BTreeMap::new();
    for id in speakers {
        let clip_ids = manifest::select_clips(manifest, &id, config.protocol, config.seed)?;
        let mut per_clip = Vec::with_capacity(clip_ids.len());
        let mut first_clip = None;
        for clip_id in &clip_ids {
            let utt = manifest
                .utterance(clip_id)
                .expect("select_clips returned a manifest clip");
            if first_clip.is_none() {
                first_clip = Some(utt.path.clone());
            }
            per_clip.push(backends.asv_embed(&read_wav(&utt.path)?)?);
        }
        let aggregate = mean_embedding(&per_clip)?;
        refs.insert(
            id,
            AsvReference {
                aggregate,
                per_clip,
                first_clip: first_clip.expect("select_clips returns at least one clip"),
            },
        );
    }
    Ok(refs)
}

#[derive(Debug)]
pub struct CalibrateSummary {
    pub table: ThresholdTable,
    pub n_trials: usize,
    /// One line per FAR target the trial set cannot resolve.
    pub warnings: Vec<String>,
}

/// Builds impostor trials over the corpus speakers and calibrates one
/// acceptance threshold per FAR target.
pub fn cmd_calibrate(config: &RunConfig, force: bool) -> Result<CalibrateSummary, RunnerError> {
    let dir = RunDirectory::open_or_init(config, force)?;
    let manifest = load_manifest(&dir)?;
    let backends = config.load_backends()?;
    let speakers: Vec<String> = manifest
        .speakers_with_audio()
        .iter()
        .map(|s| s.speaker_id.clone())
        .collect();
    let refs = asv_references(config, &backends, &manifest, speakers)?;
    let entries: Vec<(String, SpeakerEmbedding)> = refs
        .iter()
        .map(|(id, r)| (id.clone(), r.aggregate.clone()))
        .collect();
    let trials = asv::build_impostor_trials(
        &entries,
        derive_seed(config.seed, &["impostor-trials"]),
        config.calibration_trials,
    )?;
    persist_via(&dir.trials_file(), |tmp| {
        asv::write_trials(&trials, tmp).map_err(Into::into)
    })?;
    let scores: Vec<f64> = trials.iter().map(|t| t.score).collect();
    let table = asv::calibrate_thresholds(&scores, &config.far_targets)?;
    write_atomic(&dir.thresholds_file(), table.to_json_string().as_bytes())?;
    let warnings = table
        .unresolvable_targets()
        .into_iter()
        .map(|t| {
            format!(
                "FAR target {t} needs at least {:.0} nonmated trials but only {} exist; \
                 its threshold collapses to the maximum observed score",
                (1.0 / t).ceil(),
                trials.len(),
            )
        })
        .collect();
    Ok(CalibrateSummary {
        table,
        n_trials: trials.len(),
        warnings,
    })
}

/// Scores one strategy's finished morphs and writes its metric report.
fn evaluate_strategy(
    config: &RunConfig,
    dir: &RunDirectory,
    backends: &BackendSet,
    manifest: &CorpusManifest,
    pairs: &MorphPairList,
    strategy: FusionStrategy,
) -> Result<MetricReport, RunnerError> {
    let label = strategy_label(&strategy);
    let thresholds_path = dir.thresholds_file();
    if !thresholds_path.exists() {
        return Err(RunnerError::Data(format!(
            "no thresholds at {}; run `voxmorph calibrate` first",
            thresholds_path.display()
        )));
    }
    let body = fs::read_to_string(&thresholds_path)
        .map_err(|e| RunnerError::io(thresholds_path.clone(), e))?;
    let thresholds = ThresholdTable::from_json_str(&body).map_err(|e| {
        RunnerError::Data(format!(
            "malformed thresholds at {}: {e}",
            thresholds_path.display()
        ))
    })?;

    // Pairs whose morph completed; the rest were failures within the morph
    // budget and are excluded from scoring.
    let live: Vec<&(String, String)> = pairs
        .pairs
        .iter()
        .filter(|(a, b)| {
            let (wav, json) = morph_artifact_paths(dir, &label, a, b);
            wav.exists() && json.exists()
        })
        .collect();
    if live.len() < 2 {
        return Err(RunnerError::Data(format!(
            "{} completed morphs for strategy {label} under {}; need at least 2, \
             run `voxmorph morph` first",
            live.len(),
            dir.morphs_dir().display(),
        )));
    }
    let speakers: BTreeSet<String> = live
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    let refs = asv_references(config, backends, manifest, speakers.iter().cloned())?;

    let mel = MelConfig::default();
    let mut reference_audio: BTreeMap<&str, Waveform> = BTreeMap::new();
    for id in &speakers {
        reference_audio.insert(id, read_wav(&refs[id].first_clip)?);
    }

    let mut tuples: Vec<(f64, f64)> = Vec::with_capacity(live.len());
    let mut morph_embeddings: Vec<Vec<f64>> = Vec::with_capacity(live.len());
    let mut klds: Vec<f64> = Vec::with_capacity(live.len());
    let mut wers: Vec<f64> = Vec::new();
    let mut score_rows = String::from("speaker_a\tspeaker_b\tscore_a\tscore_b\n");
    for (a, b) in &live {
        let (wav_path, json_path) = morph_artifact_paths(dir, &label, a, b);
        let wave = read_wav(&wav_path)?;
        let embedding = backends.asv_embed(&wave)?;
        let score_a = asv::score(&embedding, &refs[a].aggregate)?;
        let score_b = asv::score(&embedding, &refs[b].aggregate)?;
        tuples.push((score_a, score_b));
        score_rows.push_str(&format!("{a}\t{b}\t{score_a:.17}\t{score_b:.17}\n"));
        morph_embeddings.push(embedding.values().to_vec());
        let kld_a = metrics::kld_logmel(&wave, &reference_audio[a.as_str()], &mel)?;
        let kld_b = metrics::kld_logmel(&wave, &reference_audio[b.as_str()], &mel)?;
        klds.push(0.5 * (kld_a + kld_b));
        if let Some(transcribed) = backends.transcribe(&wave) {
            let prov_body = fs::read_to_string(&json_path)
                .map_err(|e| RunnerError::io(json_path.clone(), e))?;
            let prov: Provenance = serde_json::from_str(&prov_body).map_err(|e| {
                RunnerError::Data(format!("malformed provenance {}: {e}", json_path.display()))
            })?;
            wers.push(metrics::wer(&prov.text, &transcribed?)?);
        }
    }

    let mut clone_embeddings: Vec<Vec<f64>> = Vec::new();
    for id in &speakers {
        let (wav_path, json_path) = clone_artifact_paths(dir, id);
        if wav_path.exists() && json_path.exists() {
            let embedding = backends.asv_embed(&read_wav(&wav_path)?)?;
            clone_embeddings.push(embedding.values().to_vec());
        }
    }
    if clone_embeddings.len() < 2 {
        return Err(RunnerError::Data(format!(
            "{} completed clones under {}; need at least 2, run `voxmorph morph` first",
            clone_embeddings.len(),
            dir.clones_dir().display(),
        )));
    }
    let real_embeddings: Vec<Vec<f64>> = refs
        .values()
        .flat_map(|r| r.per_clip.iter().map(|e| e.values().to_vec()))
        .collect();

    let morph_stats = metrics::gaussian_stats(&morph_embeddings)?;
    let fad_vs_real =
        metrics::frechet_distance(&morph_stats, &metrics::gaussian_stats(&real_embeddings)?)?;
    let fad_vs_clone =
        metrics::frechet_distance(&morph_stats, &metrics::gaussian_stats(&clone_embeddings)?)?;

    let mut targets = config.far_targets.clone();
    targets.sort_by(|x, y| x.total_cmp(y));
    targets.dedup();
    let mut mmpmr = BTreeMap::new();
    let mut fmmpmr = BTreeMap::new();
    for target in targets {
        let tau = thresholds.threshold_for(target).ok_or_else(|| {
            RunnerError::Data(format!(
                "thresholds at {} lack FAR target {target}; rerun `voxmorph calibrate`",
                thresholds_path.display()
            ))
        })?;
        mmpmr.insert(far_key(target), metrics::mmpmr(&tuples, tau)?);
        fmmpmr.insert(far_key(target), metrics::fmmpmr(&tuples, tau)?);
    }

    let report = MetricReport {
        fad_vs_real,
        fad_vs_clone,
        kld: klds.iter().sum::<f64>() / klds.len() as f64,
        wer: if wers.is_empty() {
            None
        } else {
            Some(wers.iter().sum::<f64>() / wers.len() as f64)
        },
        mmpmr,
        fmmpmr,
        n_morphs: tuples.len(),
    };
    report.validate()?;
    write_atomic(&dir.scores_file(&label), score_rows.as_bytes())?;
    write_atomic(&dir.report_json(&label), report.to_json_string().as_bytes())?;
    write_atomic(&dir.report_table(&label), report.render_table().as_bytes())?;
    Ok(report)
}

/// Scores the configured strategy's morphs against calibrated thresholds
/// and writes the metric report plus a per-morph score file.
pub fn cmd_evaluate(config: &RunConfig) -> Result<MetricReport, RunnerError> {
    let dir = RunDirectory::open_or_init(config, false)?;
    let manifest = load_manifest(&dir)?;
    let backends = config.load_backends()?;
    let pairs = ensure_pairs(config, &dir, &manifest, false)?;
    evaluate_strategy(config, &dir, &backends, &manifest, &pairs, config.fusion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: String,
    pub metrics: MetricReport,
}

/// The comparative report `cmd_ablate` writes: rows in input order over a
/// shared pair list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Hex SHA-256 of the shared `pairs.tsv`, proof the rows saw the same
    /// pairs.
    pub pairs_digest: String,
    pub rows: Vec<AblationRow>,
}

/// Morphs and evaluates every strategy over one shared pair list, then
/// writes the comparison table. Row order follows the input order.
pub fn cmd_ablate(
    config: &RunConfig,
    strategies: &[FusionStrategy],
    force: bool,
) -> Result<Vec<(String, MetricReport)>, RunnerError> {
    if strategies.is_empty() {
        return Err(RunnerError::Usage(
            "ablate needs at least one strategy".into(),
        ));
    }
    let labels: Vec<String> = strategies.iter().map(strategy_label).collect();
    for (i, label) in labels.iter().enumerate() {
        if labels[..i].contains(label) {
            return Err(RunnerError::Usage(format!(
                "strategy {label} appears twice in the ablation list"
            )));
        }
    }
    let dir = RunDirectory::open_or_init(config, force)?;
    let manifest = load_manifest(&dir)?;
    let backends = config.load_backends()?;
    let pairs = ensure_pairs(config, &dir, &manifest, force)?;

    let mut rows: Vec<(String, MetricReport)> = Vec::with_capacity(strategies.len());
    for (strategy, label) in strategies.iter().zip(&labels) {
        run_morph_batch(config, &dir, &backends, &manifest, &pairs, *strategy)?;
        let report = evaluate_strategy(config, &dir, &backends, &manifest, &pairs, *strategy)?;
        rows.push((label.clone(), report));
    }

    let ablation = AblationReport {
        pairs_digest: file_digest(&dir.pairs_file())?,
        rows: rows
            .iter()
            .map(|(strategy, metrics)| AblationRow {
                strategy: strategy.clone(),
                metrics: metrics.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&ablation).expect("ablation report serializes") + "\n";
    write_atomic(&dir.ablation_json(), json.as_bytes())?;
    write_atomic(
        &dir.ablation_table(),
        render_ablation_table(&rows).as_bytes(),
    )?;
    Ok(rows)
}

/// Re-renders the stored reports: the ablation comparison when one exists,
/// otherwise the configured strategy's single-run table.
pub fn cmd_report(config: &RunConfig) -> Result<String, RunnerError> {
    let dir = RunDirectory::open_or_init(config, false)?;
    let ablation_path = dir.ablation_json();
    if ablation_path.exists() {
        let body = fs::read_to_string(&ablation_path)
            .map_err(|e| RunnerError::io(ablation_path.clone(), e))?;
        let ablation: AblationReport = serde_json::from_str(&body).map_err(|e| {
            RunnerError::Data(format!(
                "malformed ablation report {}: {e}",
                ablation_path.display()
            ))
        })?;
        let rows: Vec<(String, MetricReport)> = ablation
            .rows
            .into_iter()
            .map(|row| (row.strategy, row.metrics))
            .collect();
        return Ok(render_ablation_table(&rows));
    }
    let report_path = dir.report_json(&strategy_label(&config.fusion));
    if report_path.exists() {
        let body = fs::read_to_string(&report_path)
            .map_err(|e| RunnerError::io(report_path.clone(), e))?;
        let report = MetricReport::from_json_str(&body).map_err(|e| {
            RunnerError::Data(format!("malformed report {}: {e}", report_path.display()))
        })?;
        return Ok(report.render_table());
    }
    Err(RunnerError::Data(format!(
        "no reports under {}; run `voxmorph evaluate` or `voxmorph ablate` first",
        dir.reports_dir().display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::FusionMethod;
    use crate::toy::make_toy_corpus;
    use std::collections::HashMap;

    fn fixture(
        tmp: &Path,
        n_speakers: usize,
        clips_per_speaker: usize,
        n_pairs: usize,
    ) -> RunConfig {
        let corpus = tmp.join("corpus");
        make_toy_corpus(&corpus, n_speakers, clips_per_speaker, 11).unwrap();
        let mut config = RunConfig::new(corpus, tmp.join("run"));
        config.n_pairs = n_pairs;
        config.seed = 5;
        config.workers = 2;
        config
    }

    fn wavs_in(dir: &Path) -> Vec<PathBuf> {
        let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .collect();
        wavs.sort();
        wavs
    }

    #[test]
    fn ingest_builds_the_manifest_and_refuses_overwrite() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 3, 2, 1);
        let summary = cmd_ingest(&config, false).unwrap();
        assert_eq!(summary.n_speakers, 3);
        assert_eq!(summary.n_utterances, 6);
        assert!(summary.skipped.is_empty());

        let err = cmd_ingest(&config, false).unwrap_err();
        assert!(err.to_string().contains("--force"), "{err}");
        cmd_ingest(&config, true).unwrap();
    }

    #[test]
    fn ingest_with_missing_root_is_a_data_error() {
        let tmp = tempfile::tempdir().unwrap();
        let config = RunConfig::new(tmp.path().join("nowhere"), tmp.path().join("run"));
        let err = cmd_ingest(&config, false).unwrap_err();
        assert!(matches!(err, RunnerError::Data(_)), "{err}");
    }

    #[test]
    fn morph_emits_one_wav_and_provenance_per_pair() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 4, 1, 6);
        cmd_ingest(&config, false).unwrap();
        let summary = cmd_morph(&config, false).unwrap();
        // 6 pairs over 4 speakers touch every speaker: 6 + 4 jobs.
        assert_eq!(summary.n_jobs, 10);
        assert_eq!(summary.generated, 10);
        assert!(summary.failures.is_empty());

        let dir = RunDirectory::open_or_init(&config, false).unwrap();
        let label = strategy_label(&config.fusion);
        let wavs = wavs_in(&dir.morph_dir(&label));
        assert_eq!(wavs.len(), 6);
        for wav in &wavs {
            let prov_path = wav.with_extension("json");
            let prov: Provenance =
                serde_json::from_str(&fs::read_to_string(prov_path).unwrap()).unwrap();
            assert_eq!(prov.strategy, config.fusion);
        }
        assert_eq!(wavs_in(&dir.clones_dir()).len(), 4);
    }

    #[test]
    fn morph_resumes_only_missing_jobs_with_identical_bytes() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 4, 1, 6);
        cmd_ingest(&config, false).unwrap();
        cmd_morph(&config, false).unwrap();

        let dir = RunDirectory::open_or_init(&config, false).unwrap();
        let label = strategy_label(&config.fusion);
        let wavs = wavs_in(&dir.morph_dir(&label));
        let originals: HashMap<PathBuf, Vec<u8>> = wavs
            .iter()
            .map(|p| (p.clone(), fs::read(p).unwrap()))
            .collect();
        fs::remove_file(&wavs[1]).unwrap();
        fs::remove_file(&wavs[4]).unwrap();

        let summary = cmd_morph(&config, false).unwrap();
        assert_eq!(summary.generated, 2);
        assert_eq!(summary.skipped, 8);
        for (path, bytes) in originals {
            assert_eq!(fs::read(&path).unwrap(), bytes, "{}", path.display());
        }
    }

    #[test]
    fn morph_failures_over_budget_fail_the_command() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = fixture(tmp.path(), 4, 1, 6);
        cmd_ingest(&config, false).unwrap();
        // Breaking one speaker's only clip fails that profile, hence every
        // job touching the speaker: 3 of 6 pairs plus 1 of 4 clones.
        let victim = manifest::read_manifest(
            &RunDirectory::open_or_init(&config, false)
                .unwrap()
                .manifest_file(),
        )
        .unwrap();
        let clip = victim.clips_of("100")[0].path.clone();
        fs::write(&clip, b"not audio").unwrap();

        let err = cmd_morph(&config, false).unwrap_err();
        assert!(matches!(err, RunnerError::Backend(_)), "{err}");
        assert!(err.to_string().contains("morph jobs failed"), "{err}");

        config.failure_budget = 0.5;
        let summary = cmd_morph(&config, false).unwrap();
        assert_eq!(summary.failures.len(), 4);
        assert_eq!(summary.generated + summary.skipped, 6);
    }

    #[test]
    fn calibrate_writes_thresholds_and_warns_on_unresolvable_targets() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = fixture(tmp.path(), 6, 1, 1);
        config.far_targets = vec![0.0001, 0.01, 0.2];
        cmd_ingest(&config, false).unwrap();
        let summary = cmd_calibrate(&config, false).unwrap();
        // 6 speakers give 15 nonmated trials: enough for FAR 0.2, far too
        // few for the other two targets.
        assert_eq!(summary.n_trials, 15);
        assert_eq!(summary.warnings.len(), 2);
        assert!(
            summary.warnings[0].contains("10000"),
            "{}",
            summary.warnings[0]
        );

        let dir = RunDirectory::open_or_init(&config, false).unwrap();
        let first = fs::read(dir.thresholds_file()).unwrap();
        let table = ThresholdTable::from_json_str(std::str::from_utf8(&first).unwrap()).unwrap();
        assert_eq!(table.calibration_size, 15);
        assert_eq!(table.unresolvable_targets(), vec![0.0001, 0.01]);

        cmd_calibrate(&config, false).unwrap();
        assert_eq!(fs::read(dir.thresholds_file()).unwrap(), first);
    }

    #[test]
    fn evaluate_needs_thresholds_and_names_calibrate() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 4, 1, 3);
        cmd_ingest(&config, false).unwrap();
        cmd_morph(&config, false).unwrap();
        let err = cmd_evaluate(&config).unwrap_err();
        assert!(err.to_string().contains("voxmorph calibrate"), "{err}");
    }

    #[test]
    fn evaluate_emits_a_coherent_report() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 5, 2, 6);
        cmd_ingest(&config, false).unwrap();
        cmd_morph(&config, false).unwrap();
        cmd_calibrate(&config, false).unwrap();
        let report = cmd_evaluate(&config).unwrap();
        report.validate().unwrap();
        assert_eq!(report.n_morphs, 6);
        assert!(report.wer.is_none());
        assert_eq!(report.mmpmr.len(), 3);

        let dir = RunDirectory::open_or_init(&config, false).unwrap();
        let label = strategy_label(&config.fusion);
        let json = fs::read_to_string(dir.report_json(&label)).unwrap();
        assert_eq!(MetricReport::from_json_str(&json).unwrap(), report);
        let scores = fs::read_to_string(dir.scores_file(&label)).unwrap();
        assert_eq!(scores.lines().count(), 7);
        assert!(fs::read_to_string(dir.report_table(&label))
            .unwrap()
            .contains("fad_vs_real"));
        assert!(cmd_report(&config).unwrap().contains("fad_vs_real"));
    }

    #[test]
    fn ablate_shares_pairs_and_keeps_row_order() {
        let tmp = tempfile::tempdir().unwrap();
        let config = fixture(tmp.path(), 4, 1, 4);
        cmd_ingest(&config, false).unwrap();
        cmd_calibrate(&config, false).unwrap();
        let strategies = [
            FusionStrategy::uniform(FusionMethod::Slerp, 0.5).unwrap(),
            FusionStrategy::uniform(FusionMethod::Lerp, 0.5).unwrap(),
            FusionStrategy::uniform(FusionMethod::LinearAverage, 0.5).unwrap(),
            FusionStrategy::new(FusionMethod::Lerp, FusionMethod::Slerp, 0.5).unwrap(),
        ];
        let rows = cmd_ablate(&config, &strategies, false).unwrap();
        let labels: Vec<&str> = rows.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(
            labels,
            [
                "slerp-a0.5",
                "lerp-a0.5",
                "linear_average-a0.5",
                "lerp+slerp-a0.5"
            ]
        );

        let dir = RunDirectory::open_or_init(&config, false).unwrap();
        let ablation: AblationReport =
            serde_json::from_str(&fs::read_to_string(dir.ablation_json()).unwrap()).unwrap();
        assert_eq!(
            ablation.pairs_digest,
            file_digest(&dir.pairs_file()).unwrap()
        );
        assert_eq!(ablation.rows.len(), 4);

        let table = fs::read_to_string(dir.ablation_table()).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("strategy"));
        assert!(lines[1].starts_with("slerp-a0.5"));
        assert!(lines[4].starts_with("lerp+slerp-a0.5"));
        assert!(cmd_report(&config).unwrap().starts_with("strategy"));
    }

    #[test]
    fn identical_configs_produce_byte_identical_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus = tmp.path().join("corpus");
        make_toy_corpus(&corpus, 4, 1, 11).unwrap();
        let mut artifacts: Vec<HashMap<String, Vec<u8>>> = Vec::new();
        for run in ["run-a", "run-b"] {
            let mut config = RunConfig::new(&corpus, tmp.path().join(run));
            config.n_pairs = 3;
            config.seed = 5;
            config.workers = 2;
            cmd_ingest(&config, false).unwrap();
            cmd_morph(&config, false).unwrap();
            cmd_calibrate(&config, false).unwrap();
            cmd_evaluate(&config).unwrap();

            let dir = RunDirectory::open_or_init(&config, false).unwrap();
            let label = strategy_label(&config.fusion);
            let mut bytes = HashMap::new();
            for (name, path) in [
                ("manifest", dir.manifest_file()),
                ("pairs", dir.pairs_file()),
                ("thresholds", dir.thresholds_file()),
                ("trials", dir.trials_file()),
                ("scores", dir.scores_file(&label)),
                ("report.json", dir.report_json(&label)),
                ("report.txt", dir.report_table(&label)),
            ] {
                bytes.insert(name.to_owned(), fs::read(path).unwrap());
            }
            for wav in wavs_in(&dir.morph_dir(&label)) {
                let name = wav.file_name().unwrap().to_string_lossy().into_owned();
                bytes.insert(name, fs::read(&wav).unwrap());
            }
            artifacts.push(bytes);
        }
        let (a, b) = (&artifacts[0], &artifacts[1]);
        assert_eq!(a.len(), b.len());
        for (name, bytes) in a {
            assert_eq!(bytes, &b[name], "{name} differs between identical runs");
        }
    }

    #[test]
    fn strategy_labels_are_distinct_and_path_safe() {
        let slerp = FusionStrategy::default();
        assert_eq!(strategy_label(&slerp), "slerp-a0.5");
        let mixed = FusionStrategy::new(FusionMethod::Lerp, FusionMethod::Slerp, 0.25).unwrap();
        assert_eq!(strategy_label(&mixed), "lerp+slerp-a0.25");
        for label in [strategy_label(&slerp), strategy_label(&mixed)] {
            assert!(label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '+' | '.')));
        }
    }
}
