//! Parametric voices for the toy backend.
//!
//! A toy speaker is a harmonic-series instrument: a base pitch drawn from a
//! gendered region of a shared log-spaced grid, a 16-value harmonic amplitude
//! profile that acts as the speaker's timbre, and a handful of prosodic
//! habits (syllable rate, a repeating pitch pattern). Clips are rendered as
//! syllable bursts of the harmonic stack separated by short silences, which
//! keeps every quantity recoverable by the matching analysis code.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::{Waveform, CANONICAL_RATE};
use crate::embedding::{EmbeddingKind, Gender, SpeakerEmbedding};
use crate::seeding::rng_for;

/// Number of harmonics in a toy voice, and the toy timbre dimension.
pub const N_HARMONICS: usize = 16;

/// Toy prosody embedding dimension.
pub const PROSODY_DIM: usize = 8;

/// Entries per gender region in [`pitch_grid`].
pub const GRID_PER_GENDER: usize = 24;

/// Male pitch region bounds, Hz.
pub const MALE_F0_RANGE: (f64, f64) = (100.0, 150.0);

/// Female pitch region bounds, Hz.
pub const FEMALE_F0_RANGE: (f64, f64) = (185.0, 245.0);

/// The shared pitch grid: 24 log-spaced values per gender region, male region
/// first. Synthesis only ever uses frequencies from this grid, so analysis
/// can recover pitch exactly by searching it.
pub fn pitch_grid() -> Vec<f64> {
    let mut grid = Vec::with_capacity(2 * GRID_PER_GENDER);
    for &(lo, hi) in &[MALE_F0_RANGE, FEMALE_F0_RANGE] {
        let step = (hi / lo).ln() / (GRID_PER_GENDER - 1) as f64;
        for i in 0..GRID_PER_GENDER {
            grid.push(lo * (step * i as f64).exp());
        }
    }
    grid
}

/// Grid index range owned by a gender.
pub fn gender_grid_range(gender: Gender) -> std::ops::Range<usize> {
    match gender {
        Gender::Male => 0..GRID_PER_GENDER,
        Gender::Female | Gender::Unknown => GRID_PER_GENDER..2 * GRID_PER_GENDER,
    }
}

/// A sampled toy speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVoice {
    pub speaker_id: String,
    pub gender: Gender,
    /// Index of the base pitch in the shared grid.
    pub f0_index: usize,
    /// Unnormalized harmonic amplitudes; their direction is the timbre.
    pub harmonic_amps: [f64; N_HARMONICS],
    /// Syllables per second.
    pub syllable_rate: f64,
    /// Repeating per-syllable pitch offsets, in grid steps.
    pub pattern: [i8; 4],
}

impl ToyVoice {
    /// Draws a voice deterministically from a seed.
    pub fn sample(speaker_id: &str, gender: Gender, seed: u64) -> ToyVoice {
        let mut rng = rng_for(seed, &["toy-voice", speaker_id]);
        let region = gender_grid_range(gender);
        let f0_index = rng.gen_range(region.start + 2..region.end - 2);
        let mut harmonic_amps = [0.0; N_HARMONICS];
        for (k, amp) in harmonic_amps.iter_mut().enumerate() {
            let log_mean = -0.15 * k as f64;
            let normal = Normal::new(log_mean, 1.0).expect("finite parameters");
            *amp = normal.sample(&mut rng).exp();
        }
        let syllable_rate = rng.gen_range(2.5..4.0);
        let mut pattern = [0i8; 4];
        for p in &mut pattern {
            *p = rng.gen_range(-2..=2);
        }
        ToyVoice {
            speaker_id: speaker_id.to_owned(),
            gender,
            f0_index,
            harmonic_amps,
            syllable_rate,
            pattern,
        }
    }

    /// Base pitch in Hz.
    pub fn base_f0(&self) -> f64 {
        pitch_grid()[self.f0_index]
    }

    /// Pitch of the `i`-th syllable: the base index offset by the repeating
    /// pattern, clamped to the voice's gender region.
    pub fn syllable_f0(&self, syllable: usize) -> f64 {
        let region = gender_grid_range(self.gender);
        let offset = self.pattern[syllable % self.pattern.len()] as isize;
        let idx =
            (self.f0_index as isize + offset).clamp(region.start as isize, region.end as isize - 1);
        pitch_grid()[idx as usize]
    }

    /// The voice's timbre as a unit vector over harmonic amplitudes.
    pub fn timbre_embedding(&self) -> SpeakerEmbedding {
        SpeakerEmbedding::new(EmbeddingKind::Timbre, self.harmonic_amps.to_vec())
            .expect("toy amplitudes are positive and finite")
    }

    /// Prosody embedding computed from the voice parameters directly, without
    /// rendering audio. Matches the statistics the toy encoder measures from
    /// rendered clips closely enough for same-speaker cosines near one.
    pub fn prosody_embedding(&self) -> SpeakerEmbedding {
        let grid = pitch_grid();
        let region = gender_grid_range(self.gender);
        let f0s: Vec<f64> = (0..self.pattern.len())
            .map(|i| {
                let idx = (self.f0_index as isize + self.pattern[i] as isize)
                    .clamp(region.start as isize, region.end as isize - 1);
                grid[idx as usize].ln()
            })
            .collect();
        let mean_log = f0s.iter().sum::<f64>() / f0s.len() as f64;
        let var = f0s.iter().map(|x| (x - mean_log).powi(2)).sum::<f64>() / f0s.len() as f64;
        let voiced_fraction = VOICED_FRACTION;
        let mean_dur = voiced_fraction / self.syllable_rate;
        let stats = prosody_stats(
            mean_log,
            var.sqrt(),
            self.syllable_rate,
            voiced_fraction,
            mean_dur,
            pattern_alternation(&self.pattern),
            0.0,
        );
        SpeakerEmbedding::new(EmbeddingKind::Prosody, stats).expect("stats are finite")
    }
}

/// Fraction of each syllable slot that is voiced; the rest is silence.
pub const VOICED_FRACTION: f64 = 0.72;

/// Syllable attack time, seconds.
pub const ATTACK: f64 = 0.015;

/// Syllable decay time, seconds.
pub const DECAY: f64 = 0.020;

/// Rendered clips are peak-normalized to this amplitude.
pub const RENDER_PEAK: f64 = 0.35;

/// Lag-1 correlation of the deltas of a sequence, in [-1, 1]. Zig-zag
/// sequences score negative, monotone ramps positive, constants zero.
pub fn alternation_score(seq: &[f64]) -> f64 {
    let deltas: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
    let num: f64 = deltas.windows(2).map(|w| w[0] * w[1]).sum();
    let den: f64 = deltas.iter().map(|d| d * d).sum();
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(-1.0, 1.0)
    }
}

/// [`alternation_score`] of a pitch pattern.
pub fn pattern_alternation(pattern: &[i8]) -> f64 {
    let seq: Vec<f64> = pattern.iter().map(|&p| p as f64).collect();
    alternation_score(&seq)
}

/// Assembles the raw 8-value prosody statistics vector shared by the analytic
/// embedding above and the measuring encoder in [`super::analysis`].
pub fn prosody_stats(
    mean_log_f0: f64,
    std_log_f0: f64,
    syllable_rate: f64,
    voiced_fraction: f64,
    mean_syllable_dur: f64,
    alternation: f64,
    energy_modulation: f64,
) -> Vec<f64> {
    let lo = MALE_F0_RANGE.0.ln();
    let hi = FEMALE_F0_RANGE.1.ln();
    vec![
        ((mean_log_f0 - lo) / (hi - lo)).clamp(0.0, 1.0),
        (std_log_f0 * 10.0).clamp(0.0, 1.0),
        ((syllable_rate - 2.0) / 3.0).clamp(0.0, 1.0),
        voiced_fraction.clamp(0.0, 1.0),
        (mean_syllable_dur / 0.5).clamp(0.0, 1.0),
        0.5 + 0.5 * alternation.clamp(-1.0, 1.0),
        energy_modulation.clamp(0.0, 1.0),
        1.0,
    ]
}

/// Syllable count for one word of rendered text: roughly one per three
/// characters, between 1 and 4.
pub fn syllables_in_word(word: &str) -> usize {
    word.chars().count().div_ceil(3).clamp(1, 4)
}

/// Splits text into (word, syllable counts) pairs; empty text yields none.
pub fn syllable_plan(text: &str) -> Vec<(String, usize)> {
    text.split_whitespace()
        .map(|w| (w.to_owned(), syllables_in_word(w)))
        .collect()
}

/// Phase offset that spreads harmonic peaks in time, keeping the rendered
/// crest factor low without any randomness.
pub fn newman_phase(k: usize) -> f64 {
    std::f64::consts::PI * (k * (k + 1)) as f64 / N_HARMONICS as f64
}

/// Renders `text` spoken by `voice`. The seed only jitters syllable timing
/// and per-syllable gain; pitch and timbre stay exactly on the voice's
/// parameters so analysis can recover them.
pub fn render_clip(voice: &ToyVoice, text: &str, seed: u64) -> Waveform {
    let rate = CANONICAL_RATE as f64;
    let mut rng = rng_for(seed, &["toy-render", &voice.speaker_id]);
    let plan = syllable_plan(text);
    let total_syllables: usize = plan.iter().map(|(_, n)| n).sum();
    if total_syllables == 0 {
        let n = (0.2 * rate) as usize;
        return Waveform::new(vec![0.0; n], CANONICAL_RATE).expect("silence is valid");
    }

    let slot = 1.0 / voice.syllable_rate;
    let mut samples: Vec<f64> = Vec::new();
    let mut syllable_index = 0usize;
    for (word_i, (_, n_syl)) in plan.iter().enumerate() {
        if word_i > 0 {
            let pause = slot * (1.0 - VOICED_FRACTION) * rng.gen_range(1.2..1.8);
            samples.extend(std::iter::repeat_n(0.0, (pause * rate) as usize));
        }
        for _ in 0..*n_syl {
            let f0 = voice.syllable_f0(syllable_index);
            let dur = slot * VOICED_FRACTION * rng.gen_range(0.85..1.15);
            let gain = rng.gen_range(0.8..1.0);
            render_syllable(&mut samples, &voice.harmonic_amps, f0, dur, gain, rate);
            let gap = slot * (1.0 - VOICED_FRACTION) * rng.gen_range(0.85..1.15);
            samples.extend(std::iter::repeat_n(0.0, (gap * rate) as usize));
            syllable_index += 1;
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = RENDER_PEAK / peak;
        for s in &mut samples {
            *s *= scale;
        }
    }
    Waveform::new(samples, CANONICAL_RATE).expect("rendered samples are bounded")
}

fn render_syllable(
    out: &mut Vec<f64>,
    amps: &[f64; N_HARMONICS],
    f0: f64,
    dur: f64,
    gain: f64,
    rate: f64,
) {
    let n = (dur * rate) as usize;
    let attack = (ATTACK * rate) as usize;
    let decay = (DECAY * rate) as usize;
    let nyquist = rate / 2.0;
    for i in 0..n {
        let t = i as f64 / rate;
        let mut env = gain;
        if i < attack {
            env *= i as f64 / attack as f64;
        }
        if n - 1 - i < decay {
            env *= (n - 1 - i) as f64 / decay as f64;
        }
        let mut s = 0.0;
        for (k, &a) in amps.iter().enumerate() {
            let freq = (k + 1) as f64 * f0;
            if freq < nyquist {
                s += a * (2.0 * std::f64::consts::PI * freq * t + newman_phase(k)).sin();
            }
        }
        out.push(env * s);
    }
}
