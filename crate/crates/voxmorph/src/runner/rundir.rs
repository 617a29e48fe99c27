//! Run directory layout and atomic artifact writes.
//!
//! Every artifact lands via write-to-temp-then-rename, so a reader never
//! sees a half-written file and an interrupted command leaves only complete
//! artifacts behind. The directory is stamped with the config's content
//! digest; commands refuse to mix artifacts from different configs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::RunnerError;
use crate::audio::wav::write_wav;
use crate::audio::Waveform;

/// One run's on-disk layout:
///
/// ```text
/// <root>/
///   config.toml            canonical config snapshot
///   config.digest          SHA-256 of the snapshot
///   manifest.jsonl         ingested corpus manifest
///   pairs.tsv              sampled morph pairs
///   thresholds.json        calibrated acceptance thresholds
///   embeddings/            aggregated per-speaker source embeddings
///   morphs/<label>/        one WAV + provenance JSON per pair
///   morphs/clones/         single-source clones, shared across strategies
///   scores/                impostor trials and per-morph match scores
///   reports/               metric reports, JSON and aligned tables
/// ```
#[derive(Debug, Clone)]
pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    /// Opens the run directory for `config`, creating and stamping it on
    /// first use. An existing directory stamped with a different config
    /// digest is refused unless `force`, which clears it and restamps.
    pub fn open_or_init(config: &RunConfig, force: bool) -> Result<Self, RunnerError> {
        let dir = RunDirectory {
            root: config.output_dir.clone(),
        };
        let digest = config.digest();
        let stamp = dir.digest_file();
        if stamp.exists() {
            let existing =
                fs::read_to_string(&stamp).map_err(|e| RunnerError::io(stamp.clone(), e))?;
            if existing.trim() != digest {
                if !force {
                    return Err(RunnerError::Data(format!(
                        "{} holds a run for a different config (digest {} != {digest}); \
                         pass --force to clear it or choose a fresh output directory",
                        dir.root.display(),
                        existing.trim(),
                    )));
                }
                dir.clear_artifacts()?;
            }
        }
        dir.ensure_layout()?;
        write_atomic(&dir.config_snapshot(), config.canonical_toml().as_bytes())?;
        write_atomic(&stamp, format!("{digest}\n").as_bytes())?;
        Ok(dir)
    }

    fn ensure_layout(&self) -> Result<(), RunnerError> {
        for dir in [
            self.root.clone(),
            self.embeddings_dir(),
            self.morphs_dir(),
            self.scores_dir(),
            self.reports_dir(),
        ] {
            fs::create_dir_all(&dir).map_err(|e| RunnerError::io(dir.clone(), e))?;
        }
        Ok(())
    }

    fn clear_artifacts(&self) -> Result<(), RunnerError> {
        for file in [
            self.manifest_file(),
            self.pairs_file(),
            self.thresholds_file(),
        ] {
            if file.exists() {
                fs::remove_file(&file).map_err(|e| RunnerError::io(file.clone(), e))?;
            }
        }
        for dir in [
            self.embeddings_dir(),
            self.morphs_dir(),
            self.scores_dir(),
            self.reports_dir(),
        ] {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| RunnerError::io(dir.clone(), e))?;
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn digest_file(&self) -> PathBuf {
        self.root.join("config.digest")
    }

    pub fn manifest_file(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn pairs_file(&self) -> PathBuf {
        self.root.join("pairs.tsv")
    }

    pub fn thresholds_file(&self) -> PathBuf {
        self.root.join("thresholds.json")
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn morphs_dir(&self) -> PathBuf {
        self.root.join("morphs")
    }

    /// Morph outputs for one fusion strategy.
    pub fn morph_dir(&self, label: &str) -> PathBuf {
        self.morphs_dir().join(label)
    }

    /// Single-source clones; strategy independent, so shared.
    pub fn clones_dir(&self) -> PathBuf {
        self.morphs_dir().join("clones")
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn trials_file(&self) -> PathBuf {
        self.scores_dir().join("impostor_trials.tsv")
    }

    pub fn scores_file(&self, label: &str) -> PathBuf {
        self.scores_dir().join(format!("{label}.tsv"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report_json(&self, label: &str) -> PathBuf {
        self.reports_dir().join(format!("{label}.json"))
    }

    pub fn report_table(&self, label: &str) -> PathBuf {
        self.reports_dir().join(format!("{label}.txt"))
    }

    pub fn ablation_json(&self) -> PathBuf {
        self.reports_dir().join("ablation.json")
    }

    pub fn ablation_table(&self) -> PathBuf {
        self.reports_dir().join("ablation.txt")
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| RunnerError::io(path.to_path_buf(), e))?;
    tmp.write_all(bytes)
        .map_err(|e| RunnerError::io(path.to_path_buf(), e))?;
    tmp.persist(path)
        .map_err(|e| RunnerError::io(path.to_path_buf(), e.error))?;
    Ok(())
}

/// Writes a waveform to `path` through a sibling temporary file and a
/// rename.
pub fn write_wav_atomic(waveform: &Waveform, path: &Path) -> Result<(), RunnerError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = tempfile::Builder::new()
        .suffix(".wav")
        .tempfile_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| RunnerError::io(path.to_path_buf(), e))?;
    write_wav(waveform, tmp.path())?;
    tmp.persist(path)
        .map_err(|e| RunnerError::io(path.to_path_buf(), e.error))?;
    Ok(())
}
