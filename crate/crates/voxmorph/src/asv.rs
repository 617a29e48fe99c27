//! Speaker-verification scoring, impostor-trial construction, and
//! FAR-targeted threshold calibration.
//!
//! Calibration is the conservative empirical rule: the threshold for a FAR
//! target is the smallest observed score whose strict-acceptance FAR does
//! not exceed the target, so the achieved FAR is never above the target.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, SpeakerEmbedding};
use crate::seeding;

#[derive(Debug, Error)]
pub enum AsvError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("FAR target {0} outside (0, 1)")]
    InvalidTarget(f64),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("score file {path}: {reason}")]
    FileFormat { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Whether a trial compares a probe to its own speaker or an impostor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialLabel {
    Mated,
    Nonmated,
}

impl std::fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialLabel::Mated => write!(f, "mated"),
            TrialLabel::Nonmated => write!(f, "nonmated"),
        }
    }
}

/// One scored verification trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub probe_id: String,
    pub reference_id: String,
    pub score: f64,
    pub label: TrialLabel,
}

/// Verification match score: cosine similarity of the two embeddings.
pub fn score(probe: &SpeakerEmbedding, reference: &SpeakerEmbedding) -> Result<f64, AsvError> {
    Ok(cosine_similarity(probe, reference)?)
}

/// Builds nonmated trials over all distinct unordered speaker pairs. When
/// the quadratic set exceeds `cap`, a seeded uniform subsample of `cap`
/// trials is taken instead; replaying with the same seed reproduces it.
pub fn build_impostor_trials(
    speakers: &[(String, SpeakerEmbedding)],
    seed: u64,
    cap: usize,
) -> Result<Vec<Trial>, AsvError> {
    if speakers.len() < 2 {
        return Err(AsvError::InsufficientData(format!(
            "impostor trials need at least 2 speakers, got {}",
            speakers.len()
        )));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..speakers.len() {
        for j in i + 1..speakers.len() {
            pairs.push((i, j));
        }
    }
    if pairs.len() > cap {
        let mut rng = seeding::rng_for(seed, &["impostor-subsample"]);
        pairs.shuffle(&mut rng);
        pairs.truncate(cap);
        pairs.sort_unstable();
    }
    pairs
        .into_iter()
        .map(|(i, j)| {
            Ok(Trial {
                probe_id: speakers[i].0.clone(),
                reference_id: speakers[j].0.clone(),
                score: score(&speakers[i].1, &speakers[j].1)?,
                label: TrialLabel::Nonmated,
            })
        })
        .collect()
}

/// Calibrated threshold for one FAR target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    /// FAR target as a fraction.
    pub target: f64,
    pub threshold: f64,
    /// Empirical FAR achieved at this threshold; always at most `target`.
    pub achieved_far: f64,
    /// False when the calibration set is too small to resolve the target
    /// (fewer than `1 / target` nonmated scores); the threshold collapses to
    /// the maximum score and accepts nothing.
    pub resolvable: bool,
}

/// Thresholds for a set of FAR targets, sorted by ascending target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
    pub calibration_size: usize,
}

impl ThresholdTable {
    /// The threshold calibrated for `target`, if that target was requested.
    pub fn threshold_for(&self, target: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.target - target).abs() < 1e-12)
            .map(|e| e.threshold)
    }

    /// Targets the calibration set was too small to resolve.
    pub fn unresolvable_targets(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| !e.resolvable)
            .map(|e| e.target)
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold table serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Calibrates acceptance thresholds from nonmated scores.
///
/// For each target `f`, the threshold is the smallest score in the observed
/// set such that the fraction of scores strictly above it is at most `f`.
/// Acceptance everywhere is strict (`score > threshold`), so the achieved
/// FAR never exceeds the target.
pub fn calibrate_thresholds(
    nonmated_scores: &[f64],
    far_targets: &[f64],
) -> Result<ThresholdTable, AsvError> {
    if nonmated_scores.is_empty() {
        return Err(AsvError::InsufficientData(
            "calibration needs at least one nonmated score".into(),
        ));
    }
    for &t in far_targets {
        if !(t > 0.0 && t < 1.0) {
            return Err(AsvError::InvalidTarget(t));
        }
    }
    let mut sorted = nonmated_scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();

    let mut targets = far_targets.to_vec();
    targets.sort_by(|a, b| a.total_cmp(b));
    targets.dedup();

    let entries = targets
        .into_iter()
        .map(|target| {
            // Scores above sorted[i] are exactly those at indexes > last
            // occurrence of that value; scan candidates ascending and take
            // the first that satisfies the bound.
            let mut threshold = sorted[n - 1];
            let mut achieved = 0.0;
            for i in 0..n {
                if i + 1 < n && sorted[i + 1] == sorted[i] {
                    continue;
                }
                let above = n - (i + 1);
                let far = above as f64 / n as f64;
                if far <= target {
                    threshold = sorted[i];
                    achieved = far;
                    break;
                }
            }
            ThresholdEntry {
                target,
                threshold,
                achieved_far: achieved,
                resolvable: n as f64 * target >= 1.0,
            }
        })
        .collect();
    Ok(ThresholdTable {
        entries,
        calibration_size: n,
    })
}

/// The acceptance decision: strictly above threshold.
pub fn verify(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// Writes trials as tab-separated text with a header line. Columns:
/// probe_id, reference_id, score, label.
pub fn write_trials(trials: &[Trial], path: &Path) -> Result<(), AsvError> {
    let mut out = String::from("probe_id\treference_id\tscore\tlabel\n");
    for t in trials {
        out.push_str(&format!(
            "{}\t{}\t{:.17}\t{}\n",
            t.probe_id, t.reference_id, t.score, t.label
        ));
    }
    fs::write(path, out).map_err(|source| AsvError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trials(path: &Path) -> Result<Vec<Trial>, AsvError> {
    let text = fs::read_to_string(path).map_err(|source| AsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, reason: &str| AsvError::FileFormat {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(i, "expected 4 tab-separated fields"));
        }
        let score: f64 = fields[2].parse().map_err(|_| bad(i, "bad score"))?;
        let label = match fields[3] {
            "mated" => TrialLabel::Mated,
            "nonmated" => TrialLabel::Nonmated,
            _ => return Err(bad(i, "label must be mated or nonmated")),
        };
        trials.push(Trial {
            probe_id: fields[0].to_owned(),
            reference_id: fields[1].to_owned(),
            score,
            label,
        });
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingKind;

    fn emb(v: &[f64]) -> SpeakerEmbedding {
        SpeakerEmbedding::new(EmbeddingKind::Timbre, v.to_vec()).unwrap()
    }

    #[test]
    fn score_landmarks() {
        let a = emb(&[1.0, 0.0]);
        let b = emb(&[0.0, 1.0]);
        assert_eq!(score(&a, &a).unwrap(), 1.0);
        assert_eq!(score(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn score_matches_dot_product_oracle() {
        let mut rng = seeding::rng(3);
        use rand::Rng;
        for _ in 0..50 {
            let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ea = emb(&a);
            let eb = emb(&b);
            let s = score(&ea, &eb).unwrap();
            let oracle: f64 = ea
                .values()
                .iter()
                .zip(eb.values())
                .map(|(x, y)| x * y)
                .sum();
            assert!((s - oracle.clamp(-1.0, 1.0)).abs() < 1e-15);
            assert!(s.abs() <= 1.0);
        }
    }

    #[test]
    fn three_speakers_make_three_trials() {
        let speakers = vec![
            ("a".to_owned(), emb(&[1.0, 0.0])),
            ("b".to_owned(), emb(&[0.0, 1.0])),
            ("c".to_owned(), emb(&[0.6, 0.8])),
        ];
        let trials = build_impostor_trials(&speakers, 1, 1000).unwrap();
        assert_eq!(trials.len(), 3);
        assert!(trials.iter().all(|t| t.label == TrialLabel::Nonmated));
        assert!(trials.iter().all(|t| t.probe_id != t.reference_id));
    }

    #[test]
    fn identical_embeddings_score_one() {
        let speakers = vec![
            ("a".to_owned(), emb(&[0.6, 0.8])),
            ("b".to_owned(), emb(&[0.6, 0.8])),
        ];
        let trials = build_impostor_trials(&speakers, 1, 10).unwrap();
        assert_eq!(trials.len(), 1);
        assert!((trials[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capped_subsample_replays_identically() {
        let mut rng = seeding::rng(9);
        use rand::Rng;
        let speakers: Vec<(String, SpeakerEmbedding)> = (0..50)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
                (format!("s{i}"), emb(&v))
            })
            .collect();
        let t1 = build_impostor_trials(&speakers, 42, 100).unwrap();
        let t2 = build_impostor_trials(&speakers, 42, 100).unwrap();
        assert_eq!(t1.len(), 100);
        assert_eq!(t1, t2);
        let t3 = build_impostor_trials(&speakers, 43, 100).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn too_few_speakers_is_an_error() {
        let speakers = vec![("a".to_owned(), emb(&[1.0, 0.0]))];
        assert!(matches!(
            build_impostor_trials(&speakers, 1, 10),
            Err(AsvError::InsufficientData(_))
        ));
    }

    fn decimals() -> Vec<f64> {
        (1..=10).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn ten_percent_target_on_decimal_scores() {
        let table = calibrate_thresholds(&decimals(), &[0.10]).unwrap();
        let e = &table.entries[0];
        assert_eq!(e.threshold, 0.9);
        assert!((e.achieved_far - 0.1).abs() < 1e-12);
        assert!(e.resolvable);
    }

    #[test]
    fn unresolvable_target_collapses_to_max() {
        let table = calibrate_thresholds(&decimals(), &[0.0001]).unwrap();
        let e = &table.entries[0];
        assert_eq!(e.threshold, 1.0);
        assert_eq!(e.achieved_far, 0.0);
        assert!(!e.resolvable);
        assert_eq!(table.unresolvable_targets(), vec![0.0001]);
    }

    #[test]
    fn tied_scores_collapse_to_the_tie() {
        let table = calibrate_thresholds(&[0.7; 9], &[0.5]).unwrap();
        let e = &table.entries[0];
        assert_eq!(e.threshold, 0.7);
        assert_eq!(e.achieved_far, 0.0);
    }

    #[test]
    fn thresholds_non_increasing_in_target() {
        let scores: Vec<f64> = (0..200).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let table = calibrate_thresholds(&scores, &[0.001, 0.01, 0.05, 0.2]).unwrap();
        for pair in table.entries.windows(2) {
            assert!(pair[0].target < pair[1].target);
            assert!(pair[0].threshold >= pair[1].threshold);
            assert!(pair[0].achieved_far <= pair[0].target);
            assert!(pair[1].achieved_far <= pair[1].target);
        }
    }

    #[test]
    fn calibration_is_permutation_invariant() {
        let a = vec![0.3, 0.9, 0.1, 0.5, 0.7];
        let mut b = a.clone();
        b.reverse();
        let ta = calibrate_thresholds(&a, &[0.2, 0.4]).unwrap();
        let tb = calibrate_thresholds(&b, &[0.4, 0.2]).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn invalid_targets_are_rejected() {
        for t in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                calibrate_thresholds(&[0.5], &[t]),
                Err(AsvError::InvalidTarget(_))
            ));
        }
        assert!(matches!(
            calibrate_thresholds(&[], &[0.1]),
            Err(AsvError::InsufficientData(_))
        ));
    }

    #[test]
    fn verify_is_strict() {
        assert!(verify(0.91, 0.9));
        assert!(!verify(0.9, 0.9));
        assert!(!verify(-1.0, 0.0));
    }

    #[test]
    fn trials_round_trip_through_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        let trials = vec![
            Trial {
                probe_id: "morph_a_b".into(),
                reference_id: "a".into(),
                score: 0.8123456789012345,
                label: TrialLabel::Mated,
            },
            Trial {
                probe_id: "x".into(),
                reference_id: "y".into(),
                score: -0.25,
                label: TrialLabel::Nonmated,
            },
        ];
        write_trials(&trials, &path).unwrap();
        let back = read_trials(&path).unwrap();
        assert_eq!(back, trials);
    }

    #[test]
    fn threshold_table_round_trips_through_json() {
        let table = calibrate_thresholds(&decimals(), &[0.1, 0.3]).unwrap();
        let back = ThresholdTable::from_json_str(&table.to_json_string()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.threshold_for(0.1), Some(0.9));
        assert_eq!(back.threshold_for(0.5), None);
    }
}
