//! Corpus ingestion and pair sampling.
//!
//! A corpus is a LibriSpeech-style directory tree: a pipe-delimited speaker
//! index (`SPEAKERS.TXT`, `;` comments) at the root, then one directory per
//! speaker holding chapter subdirectories of WAV files. Transcripts, when
//! present, sit next to each WAV as a `.txt` sidecar. [`ingest`] walks that
//! layout into a [`CorpusManifest`]; [`sample_pairs`] draws morph pairs from
//! it; [`select_clips`] picks the clips a speaker profile is built from.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::embedding::Gender;
use crate::seeding::rng_for;

/// Most clips a v2 profile may draw on.
pub const MAX_PROTOCOL_CLIPS: usize = 7;

/// Accepted clip duration window for a v1 profile, seconds.
pub const V1_DURATION_RANGE: (f64, f64) = (5.0, 20.0);

/// Total duration ceiling for a v2 profile, seconds.
pub const V2_TOTAL_CAP: f64 = 120.0;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {reason}")]
    FormatError { path: PathBuf, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unknown speaker {0}")]
    UnknownSpeaker(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One row of the speaker index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub gender: Gender,
    pub subset: String,
}

/// One audio clip, with its duration measured at ingest time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_id: String,
    pub clip_id: String,
    pub path: PathBuf,
    /// Duration in seconds.
    pub duration: f64,
}

impl Utterance {
    /// The transcript sidecar's contents, if one exists.
    pub fn transcript(&self) -> Option<String> {
        fs::read_to_string(self.path.with_extension("txt"))
            .ok()
            .map(|t| t.trim().to_owned())
    }
}

/// Everything known about a corpus: who speaks, and which clips exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub speakers: Vec<SpeakerRecord>,
    pub utterances: Vec<Utterance>,
    pub source_root: PathBuf,
}

impl CorpusManifest {
    /// Validates the manifest invariants: utterances reference listed
    /// speakers, and every duration is positive.
    pub fn new(
        speakers: Vec<SpeakerRecord>,
        utterances: Vec<Utterance>,
        source_root: PathBuf,
    ) -> Result<Self, ManifestError> {
        let ids: HashSet<&str> = speakers.iter().map(|s| s.speaker_id.as_str()).collect();
        for utt in &utterances {
            if !ids.contains(utt.speaker_id.as_str()) {
                return Err(ManifestError::FormatError {
                    path: utt.path.clone(),
                    reason: format!("utterance references unlisted speaker {}", utt.speaker_id),
                });
            }
            if utt.duration <= 0.0 || utt.duration.is_nan() {
                return Err(ManifestError::FormatError {
                    path: utt.path.clone(),
                    reason: format!("non-positive duration {}", utt.duration),
                });
            }
        }
        Ok(CorpusManifest {
            speakers,
            utterances,
            source_root,
        })
    }

    pub fn speaker(&self, speaker_id: &str) -> Option<&SpeakerRecord> {
        self.speakers.iter().find(|s| s.speaker_id == speaker_id)
    }

    pub fn utterance(&self, clip_id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.clip_id == clip_id)
    }

    /// All clips of one speaker, in manifest order.
    pub fn clips_of(&self, speaker_id: &str) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .filter(|u| u.speaker_id == speaker_id)
            .collect()
    }

    /// Speakers that have at least one clip, in manifest order.
    pub fn speakers_with_audio(&self) -> Vec<&SpeakerRecord> {
        self.speakers
            .iter()
            .filter(|s| self.utterances.iter().any(|u| u.speaker_id == s.speaker_id))
            .collect()
    }
}

/// Morph pairs drawn from a manifest, with the draw's parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphPairList {
    /// Unordered speaker pairs, stored with the manifest-order speaker first.
    pub pairs: Vec<(String, String)>,
    pub seed: u64,
    pub gender_constraint: bool,
}

/// How many clips feed a speaker profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// One clip of 5 to 20 seconds.
    V1,
    /// Up to seven clips, at most 120 seconds in total.
    V2,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::V1 => write!(f, "v1"),
            Protocol::V2 => write!(f, "v2"),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" => Ok(Protocol::V1),
            "v2" => Ok(Protocol::V2),
            other => Err(format!("unknown protocol {other:?}, expected v1 or v2")),
        }
    }
}

/// An ingested manifest plus the files that had to be skipped.
#[derive(Debug)]
pub struct IngestReport {
    pub manifest: CorpusManifest,
    /// Unreadable audio files, with the reason each was skipped.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Walks a corpus root into a manifest. `metadata` is the speaker index
/// file; audio durations come from each WAV's header. Unreadable audio is
/// skipped and reported, not fatal.
pub fn ingest(root: &Path, metadata: &Path) -> Result<IngestReport, ManifestError> {
    let index = fs::read_to_string(metadata).map_err(|e| ManifestError::FormatError {
        path: metadata.to_path_buf(),
        reason: format!("cannot read speaker metadata: {e}"),
    })?;
    let mut speakers = Vec::new();
    for (lineno, line) in index.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() < 3 || fields[0].is_empty() {
            return Err(ManifestError::FormatError {
                path: metadata.to_path_buf(),
                reason: format!("line {}: expected ID | SEX | SUBSET columns", lineno + 1),
            });
        }
        speakers.push(SpeakerRecord {
            speaker_id: fields[0].to_owned(),
            gender: Gender::from_code(fields[1]),
            subset: fields[2].to_owned(),
        });
    }
    if speakers.is_empty() {
        return Err(ManifestError::FormatError {
            path: metadata.to_path_buf(),
            reason: "speaker metadata lists no speakers".into(),
        });
    }

    let mut utterances = Vec::new();
    let mut skipped = Vec::new();
    for speaker in &speakers {
        let dir = root.join(&speaker.speaker_id);
        if !dir.is_dir() {
            continue;
        }
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    skipped.push((dir.clone(), e.to_string()));
                    continue;
                }
            };
            let path = entry.path();
            if !entry.file_type().is_file()
                || path.extension().and_then(|e| e.to_str()) != Some("wav")
            {
                continue;
            }
            match wav_duration(path) {
                Ok(duration) => utterances.push(Utterance {
                    speaker_id: speaker.speaker_id.clone(),
                    clip_id: path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    path: path.to_path_buf(),
                    duration,
                }),
                Err(reason) => skipped.push((path.to_path_buf(), reason)),
            }
        }
    }
    if utterances.is_empty() {
        return Err(ManifestError::FormatError {
            path: root.to_path_buf(),
            reason: "no readable WAV utterances under the corpus root".into(),
        });
    }

    let manifest = CorpusManifest::new(speakers, utterances, root.to_path_buf())?;
    Ok(IngestReport { manifest, skipped })
}

/// A clip's duration in seconds, read from the WAV header alone.
fn wav_duration(path: &Path) -> Result<f64, String> {
    let reader = hound::WavReader::open(path).map_err(|e| e.to_string())?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err("zero sample rate".into());
    }
    let duration = reader.duration() as f64 / spec.sample_rate as f64;
    if duration > 0.0 {
        Ok(duration)
    } else {
        Err("empty audio stream".into())
    }
}

/// Every unordered speaker pair eligible for morphing: distinct speakers
/// that both have audio, gender-matched when `same_gender` is set.
fn eligible_pairs(manifest: &CorpusManifest, same_gender: bool) -> Vec<(String, String)> {
    let speakers = manifest.speakers_with_audio();
    let mut pairs = Vec::new();
    for (i, a) in speakers.iter().enumerate() {
        for b in &speakers[i + 1..] {
            if same_gender && a.gender != b.gender {
                continue;
            }
            pairs.push((a.speaker_id.clone(), b.speaker_id.clone()));
        }
    }
    pairs
}

/// Draws `n_pairs` morph pairs uniformly without replacement. No similarity
/// screening happens here: any two eligible speakers are fair game.
pub fn sample_pairs(
    manifest: &CorpusManifest,
    n_pairs: usize,
    seed: u64,
    same_gender: bool,
) -> Result<MorphPairList, ManifestError> {
    let mut pool = eligible_pairs(manifest, same_gender);
    if pool.len() < n_pairs {
        return Err(ManifestError::InsufficientData(format!(
            "asked for {n_pairs} pairs but only {} eligible speaker pairs exist{}",
            pool.len(),
            if same_gender { " (same-gender)" } else { "" },
        )));
    }
    let mut rng = rng_for(seed, &["sample-pairs"]);
    let (drawn, _) = pool.partial_shuffle(&mut rng, n_pairs);
    Ok(MorphPairList {
        pairs: drawn.to_vec(),
        seed,
        gender_constraint: same_gender,
    })
}

/// Picks the clips a profile is built from. v1 wants one mid-length clip;
/// v2 greedily accumulates shuffled clips under the count and duration caps.
pub fn select_clips(
    manifest: &CorpusManifest,
    speaker_id: &str,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<String>, ManifestError> {
    if manifest.speaker(speaker_id).is_none() {
        return Err(ManifestError::UnknownSpeaker(speaker_id.to_owned()));
    }
    let clips = manifest.clips_of(speaker_id);
    let mut rng = rng_for(seed, &["select-clips", speaker_id]);
    match protocol {
        Protocol::V1 => {
            let eligible: Vec<&&Utterance> = clips
                .iter()
                .filter(|u| u.duration >= V1_DURATION_RANGE.0 && u.duration <= V1_DURATION_RANGE.1)
                .collect();
            let chosen = eligible.choose(&mut rng).ok_or_else(|| {
                ManifestError::InsufficientData(format!(
                    "speaker {speaker_id} has no clip between {} and {} seconds",
                    V1_DURATION_RANGE.0, V1_DURATION_RANGE.1,
                ))
            })?;
            Ok(vec![chosen.clip_id.clone()])
        }
        Protocol::V2 => {
            let mut shuffled = clips;
            shuffled.shuffle(&mut rng);
            let mut total = 0.0;
            let mut picked = Vec::new();
            for clip in shuffled {
                if picked.len() == MAX_PROTOCOL_CLIPS || total + clip.duration > V2_TOTAL_CAP {
                    continue;
                }
                total += clip.duration;
                picked.push(clip.clip_id.clone());
            }
            if picked.is_empty() {
                return Err(ManifestError::InsufficientData(format!(
                    "speaker {speaker_id} has no clips to build a profile from",
                )));
            }
            Ok(picked)
        }
    }
}

/// Writes a manifest as line-delimited JSON: one root record, then one
/// record per speaker and per utterance.
pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    let root = serde_json::json!({"record": "root", "path": manifest.source_root});
    writeln!(out, "{root}").map_err(io_err)?;
    for speaker in &manifest.speakers {
        let mut line = serde_json::to_value(speaker).expect("speaker record serializes");
        line["record"] = "speaker".into();
        writeln!(out, "{line}").map_err(io_err)?;
    }
    for utt in &manifest.utterances {
        let mut line = serde_json::to_value(utt).expect("utterance record serializes");
        line["record"] = "utterance".into();
        writeln!(out, "{line}").map_err(io_err)?;
    }
    fs::write(path, out).map_err(io_err)
}

/// Reads a manifest written by [`write_manifest`], re-validating invariants.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format_err = |lineno: usize, reason: String| ManifestError::FormatError {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", lineno + 1),
    };
    let mut source_root = None;
    let mut speakers = Vec::new();
    let mut utterances = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| format_err(lineno, format!("not a JSON record: {e}")))?;
        match value.get("record").and_then(|r| r.as_str()) {
            Some("root") => {
                source_root = value
                    .get("path")
                    .and_then(|p| p.as_str())
                    .map(PathBuf::from);
            }
            Some("speaker") => speakers.push(
                serde_json::from_value(value)
                    .map_err(|e| format_err(lineno, format!("bad speaker record: {e}")))?,
            ),
            Some("utterance") => utterances.push(
                serde_json::from_value(value)
                    .map_err(|e| format_err(lineno, format!("bad utterance record: {e}")))?,
            ),
            other => return Err(format_err(lineno, format!("unknown record type {other:?}"))),
        }
    }
    let source_root = source_root.ok_or_else(|| ManifestError::FormatError {
        path: path.to_path_buf(),
        reason: "missing root record".into(),
    })?;
    CorpusManifest::new(speakers, utterances, source_root)
}

/// Writes a pair list as two-column tab-separated text under a seed header.
pub fn write_pairs(pairs: &MorphPairList, path: &Path) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    writeln!(
        out,
        "# seed: {}  same_gender: {}",
        pairs.seed, pairs.gender_constraint
    )
    .map_err(io_err)?;
    for (a, b) in &pairs.pairs {
        writeln!(out, "{a}\t{b}").map_err(io_err)?;
    }
    fs::write(path, out).map_err(io_err)
}

/// Reads a pair list written by [`write_pairs`].
pub fn read_pairs(path: &Path) -> Result<MorphPairList, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format_err = |reason: String| ManifestError::FormatError {
        path: path.to_path_buf(),
        reason,
    };
    let header = text
        .lines()
        .next()
        .ok_or_else(|| format_err("empty pair list".into()))?;
    let mut seed = None;
    let mut same_gender = false;
    for chunk in header
        .trim_start_matches('#')
        .split_whitespace()
        .collect::<Vec<_>>()
        .windows(2)
    {
        match chunk[0] {
            "seed:" => seed = chunk[1].parse::<u64>().ok(),
            "same_gender:" => same_gender = chunk[1] == "true",
            _ => {}
        }
    }
    let seed = seed.ok_or_else(|| format_err("header missing `# seed: N`".into()))?;
    let mut pairs = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| format_err(format!("expected two tab-separated ids, got {line:?}")))?;
        pairs.push((a.trim().to_owned(), b.trim().to_owned()));
    }
    Ok(MorphPairList {
        pairs,
        seed,
        gender_constraint: same_gender,
    })
}
