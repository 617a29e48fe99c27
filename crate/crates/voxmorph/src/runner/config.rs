//! The run configuration file and its content digest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunnerError;
use crate::audio::mel::MelConfig;
use crate::interpolation::FusionStrategy;
use crate::manifest::Protocol;
use crate::pipeline::external::load_backend_set;
use crate::pipeline::{BackendSet, SynthesisOptions};

/// Operating points reported when the config names none.
pub const DEFAULT_FAR_TARGETS: [f64; 3] = [0.0001, 0.001, 0.01];

/// Sentence every morph speaks when the config has no `text` entry. Long
/// enough that the toy pipeline clears the verification encoder's duration
/// floor.
pub const DEFAULT_MORPH_TEXT: &str =
    "the borrowed voice carries every word of this sentence across the line";

/// Environment variable consulted for a backend manifest when the config
/// has no `backend_manifest` entry.
pub const BACKENDS_ENV_VAR: &str = "VOXMORPH_BACKENDS";

fn default_protocol() -> Protocol {
    Protocol::V1
}

fn default_n_pairs() -> usize {
    20
}

fn default_far_targets() -> Vec<f64> {
    DEFAULT_FAR_TARGETS.to_vec()
}

fn default_failure_budget() -> f64 {
    0.10
}

fn default_calibration_trials() -> usize {
    500
}

fn default_flow_steps() -> usize {
    SynthesisOptions::default().flow_steps
}

fn default_guidance_scale() -> f64 {
    SynthesisOptions::default().guidance_scale
}

/// Everything a run needs, loaded from one TOML file. All fields except
/// `corpus_root` and `output_dir` have defaults, so a minimal config is two
/// lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: PathBuf,
    pub output_dir: PathBuf,
    /// Speaker index file; `None` means `SPEAKERS.TXT` under the corpus
    /// root.
    #[serde(default)]
    pub speakers_file: Option<PathBuf>,
    /// Backend manifest path. `None` falls back to [`BACKENDS_ENV_VAR`],
    /// then to the all-toy set.
    #[serde(default)]
    pub backend_manifest: Option<PathBuf>,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    /// Restrict sampled pairs to matching genders.
    #[serde(default)]
    pub same_gender: bool,
    /// FAR operating points as fractions in (0, 1).
    #[serde(default = "default_far_targets")]
    pub far_targets: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for batch morphing; 0 means one per core.
    #[serde(default)]
    pub workers: usize,
    /// Sentence every morph speaks; `None` uses [`DEFAULT_MORPH_TEXT`].
    #[serde(default)]
    pub text: Option<String>,
    /// Fraction of morph jobs allowed to fail before the command does.
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
    /// Cap on nonmated trials for threshold calibration.
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    #[serde(default = "default_flow_steps")]
    pub flow_steps: usize,
    #[serde(default = "default_guidance_scale")]
    pub guidance_scale: f64,
    #[serde(default)]
    pub fusion: FusionStrategy,
}

/// What [`RunConfig::digest`] hashes.
#[derive(Serialize)]
struct ContentKey<'a> {
    corpus_root: &'a Path,
    speakers_file: Option<&'a Path>,
    backend_manifest: Option<PathBuf>,
    protocol: Protocol,
    n_pairs: usize,
    same_gender: bool,
    far_targets: &'a [f64],
    seed: u64,
    text: Option<&'a str>,
    calibration_trials: usize,
    flow_steps: usize,
    guidance_scale: f64,
    fusion: FusionStrategy,
}

impl RunConfig {
    /// A config over the given corpus and output directory, everything else
    /// at its default.
    pub fn new(corpus_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus_root: corpus_root.into(),
            output_dir: output_dir.into(),
            speakers_file: None,
            backend_manifest: None,
            protocol: default_protocol(),
            n_pairs: default_n_pairs(),
            same_gender: false,
            far_targets: default_far_targets(),
            seed: 0,
            workers: 0,
            text: None,
            failure_budget: default_failure_budget(),
            calibration_trials: default_calibration_trials(),
            flow_steps: default_flow_steps(),
            guidance_scale: default_guidance_scale(),
            fusion: FusionStrategy::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RunnerError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| RunnerError::Usage(format!("bad run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| {
            RunnerError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |msg: String| Err(RunnerError::Usage(msg));
        if self.n_pairs < 1 {
            return bad("n_pairs must be at least 1".into());
        }
        if self.far_targets.is_empty() {
            return bad("far_targets must name at least one operating point".into());
        }
        for &t in &self.far_targets {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("far target {t} is outside (0, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.failure_budget) {
            return bad(format!(
                "failure_budget {} is outside [0, 1)",
                self.failure_budget
            ));
        }
        if self.flow_steps < 1 {
            return bad("flow_steps must be at least 1".into());
        }
        if !self.guidance_scale.is_finite() {
            return bad(format!(
                "guidance_scale {} is not finite",
                self.guidance_scale
            ));
        }
        if self.calibration_trials < 1 {
            return bad("calibration_trials must be at least 1".into());
        }
        FusionStrategy::new(
            self.fusion.prosody_method,
            self.fusion.timbre_method,
            self.fusion.alpha,
        )
        .map_err(|e| RunnerError::Usage(e.to_string()))?;
        if let Some(text) = &self.text {
            if text.trim().is_empty() {
                return bad("text must be non-empty when given".into());
            }
        }
        Ok(())
    }

    /// The config rendered as TOML with every default materialized. Two
    /// configs agree on this string exactly when they describe the same run.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Hex SHA-256 over the fields that determine artifact content. The
    /// output location, worker count, and failure budget stay out: they
    /// change how a run executes, not what it produces. The backend
    /// manifest enters as resolved, so switching backends through the
    /// environment changes the digest too.
    pub fn digest(&self) -> String {
        let key = ContentKey {
            corpus_root: &self.corpus_root,
            speakers_file: self.speakers_file.as_deref(),
            backend_manifest: self.backend_manifest_path(),
            protocol: self.protocol,
            n_pairs: self.n_pairs,
            same_gender: self.same_gender,
            far_targets: &self.far_targets,
            seed: self.seed,
            text: self.text.as_deref(),
            calibration_trials: self.calibration_trials,
            flow_steps: self.flow_steps,
            guidance_scale: self.guidance_scale,
            fusion: self.fusion,
        };
        let mut hasher = Sha256::new();
        hasher.update(toml::to_string_pretty(&key).expect("content key serializes"));
        format!("{:x}", hasher.finalize())
    }

    pub fn speakers_file_path(&self) -> PathBuf {
        self.speakers_file
            .clone()
            .unwrap_or_else(|| self.corpus_root.join("SPEAKERS.TXT"))
    }

    /// The backend manifest in effect: the config's path, else the
    /// [`BACKENDS_ENV_VAR`] environment variable, else none (all toy).
    pub fn backend_manifest_path(&self) -> Option<PathBuf> {
        self.backend_manifest
            .clone()
            .or_else(|| std::env::var_os(BACKENDS_ENV_VAR).map(PathBuf::from))
    }

    pub fn load_backends(&self) -> Result<BackendSet, RunnerError> {
        match self.backend_manifest_path() {
            Some(path) => Ok(load_backend_set(&path)?),
            None => Ok(BackendSet::toy()),
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            flow_steps: self.flow_steps,
            guidance_scale: self.guidance_scale,
            mel: MelConfig::default(),
        }
    }

    pub fn morph_text(&self) -> &str {
        self.text.as_deref().unwrap_or(DEFAULT_MORPH_TEXT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::FusionMethod;

    #[test]
    fn minimal_config_fills_defaults() {
        let config =
            RunConfig::from_toml_str("corpus_root = \"/data\"\noutput_dir = \"/runs/a\"\n")
                .unwrap();
        assert_eq!(config.n_pairs, 20);
        assert_eq!(config.far_targets, DEFAULT_FAR_TARGETS.to_vec());
        assert_eq!(config.protocol, Protocol::V1);
        assert_eq!(config.fusion, FusionStrategy::default());
        assert_eq!(config.failure_budget, 0.10);
        assert_eq!(config.morph_text(), DEFAULT_MORPH_TEXT);
        assert_eq!(
            config.speakers_file_path(),
            PathBuf::from("/data/SPEAKERS.TXT")
        );
    }

    #[test]
    fn full_config_round_trips_through_toml() {
        let mut config = RunConfig::new("/corpus", "/out");
        config.n_pairs = 7;
        config.same_gender = true;
        config.protocol = Protocol::V2;
        config.seed = 99;
        config.text = Some("speak plainly".into());
        config.fusion = FusionStrategy::uniform(FusionMethod::Lerp, 0.25).unwrap();
        let back = RunConfig::from_toml_str(&config.canonical_toml()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let base = RunConfig::new("/c", "/o");
        for mutate in [
            (|c: &mut RunConfig| c.n_pairs = 0) as fn(&mut RunConfig),
            |c| c.far_targets = vec![],
            |c| c.far_targets = vec![0.0],
            |c| c.far_targets = vec![1.0],
            |c| c.failure_budget = 1.0,
            |c| c.flow_steps = 0,
            |c| c.guidance_scale = f64::NAN,
            |c| c.fusion.alpha = 1.5,
            |c| c.text = Some("  ".into()),
        ] {
            let mut config = base.clone();
            mutate(&mut config);
            match config.validate() {
                Err(RunnerError::Usage(_)) => {}
                other => panic!("expected a usage error, got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            RunConfig::from_toml_str("corpus_root = \"/d\"\noutput_dir = \"/o\"\nbanana = true\n")
                .unwrap_err();
        assert!(matches!(err, RunnerError::Usage(_)), "{err}");
    }

    #[test]
    fn digest_tracks_content_not_formatting() {
        let a = RunConfig::from_toml_str("corpus_root = \"/d\"\noutput_dir = \"/o\"\n").unwrap();
        let b = RunConfig::from_toml_str(
            "output_dir   = \"/o\"\n\n# a comment\ncorpus_root  = \"/d\"\nn_pairs = 20\n",
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn digest_ignores_operational_knobs() {
        let base = RunConfig::new("/d", "/o");
        let mut other = base.clone();
        other.output_dir = PathBuf::from("/elsewhere");
        other.workers = 7;
        other.failure_budget = 0.25;
        assert_eq!(base.digest(), other.digest());
        let mut content = base.clone();
        content.fusion.alpha = 0.75;
        assert_ne!(base.digest(), content.digest());
    }

    #[test]
    fn explicit_manifest_path_wins_over_environment() {
        let mut config = RunConfig::new("/c", "/o");
        config.backend_manifest = Some(PathBuf::from("/etc/backends.toml"));
        assert_eq!(
            config.backend_manifest_path(),
            Some(PathBuf::from("/etc/backends.toml"))
        );
    }

    #[test]
    fn no_manifest_and_no_env_means_toy() {
        let config = RunConfig::new("/c", "/o");
        if std::env::var_os(BACKENDS_ENV_VAR).is_none() {
            assert_eq!(config.backend_manifest_path(), None);
            let backends = config.load_backends().unwrap();
            assert!(backends
                .backend_ids()
                .iter()
                .all(|id| id.name.starts_with("toy-")));
        }
    }
}
