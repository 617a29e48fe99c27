//! Signal analysis for toy voices: syllable segmentation, pitch recovery
//! over the shared grid, harmonic amplitude measurement, and the prosody and
//! timbre encoders built from them.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::Waveform;
use crate::embedding::{EmbeddingKind, SpeakerEmbedding};
use crate::pipeline::backend::PipelineError;
use crate::toy::voice::{alternation_score, pitch_grid, prosody_stats, N_HARMONICS};

/// Analysis frame length for the RMS envelope, seconds.
const ENVELOPE_WIN: f64 = 0.020;

/// Analysis hop for the RMS envelope, seconds.
const ENVELOPE_HOP: f64 = 0.005;

/// Fraction of the loudest frame below which a frame counts as silence.
const VOICED_THRESHOLD: f64 = 0.2;

/// Shortest voiced run kept as a syllable, seconds.
const MIN_RUN: f64 = 0.06;

/// A detected syllable. `run` spans the full voiced region in samples;
/// `core` is the middle half, clear of attack and decay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub run: std::ops::Range<usize>,
    pub core: std::ops::Range<usize>,
}

impl Segment {
    fn from_run(start: usize, end: usize) -> Segment {
        let len = end - start;
        Segment {
            run: start..end,
            core: start + len / 4..end - len / 4,
        }
    }
}

/// Per-frame RMS envelope of a waveform.
pub fn rms_envelope(waveform: &Waveform) -> Vec<f64> {
    let rate = waveform.sample_rate() as f64;
    let win = (ENVELOPE_WIN * rate) as usize;
    let hop = (ENVELOPE_HOP * rate) as usize;
    let samples = waveform.samples();
    if samples.len() < win {
        return Vec::new();
    }
    let n_frames = (samples.len() - win) / hop + 1;
    (0..n_frames)
        .map(|f| {
            let frame = &samples[f * hop..f * hop + win];
            (frame.iter().map(|s| s * s).sum::<f64>() / win as f64).sqrt()
        })
        .collect()
}

/// Finds voiced syllables as runs of envelope frames above a relative
/// threshold. Returns no segments for silent or near-silent input.
pub fn segment_voiced(waveform: &Waveform) -> Vec<Segment> {
    let rate = waveform.sample_rate() as f64;
    let hop = (ENVELOPE_HOP * rate) as usize;
    let win = (ENVELOPE_WIN * rate) as usize;
    let envelope = rms_envelope(waveform);
    let peak = envelope.iter().fold(0.0f64, |m, &e| m.max(e));
    if peak < 1e-5 {
        return Vec::new();
    }
    let threshold = VOICED_THRESHOLD * peak;
    let min_frames = (MIN_RUN / ENVELOPE_HOP) as usize;
    let mut segments = Vec::new();
    let mut run_start: Option<usize> = None;
    for (f, &e) in envelope.iter().enumerate() {
        if e >= threshold {
            run_start.get_or_insert(f);
        } else if let Some(s) = run_start.take() {
            if f - s >= min_frames {
                segments.push(Segment::from_run(s * hop, (f - 1) * hop + win));
            }
        }
    }
    if let Some(s) = run_start {
        if envelope.len() - s >= min_frames {
            segments.push(Segment::from_run(s * hop, (envelope.len() - 1) * hop + win));
        }
    }
    segments.retain(|seg| seg.core.len() >= 400);
    segments
}

/// Hann-windowed power spectrum, zero-padded for pitch resolution.
/// Returns the one-sided power bins and the bin spacing in Hz.
pub fn power_spectrum(samples: &[f64], rate: f64) -> (Vec<f64>, f64) {
    let n = samples.len();
    let n_fft = (n * 4).next_power_of_two().clamp(2048, 32768);
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n_fft);
    let denom = (n - 1).max(1) as f64;
    for (i, &s) in samples.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos();
        buf.push(Complex::new(s * w, 0.0));
    }
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let power: Vec<f64> = buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect();
    (power, rate / n_fft as f64)
}

/// Largest power bin within `half_width` bins of `freq`.
fn local_peak(power: &[f64], bin_hz: f64, freq: f64, half_width: usize) -> f64 {
    let center = (freq / bin_hz).round() as usize;
    let lo = center.saturating_sub(half_width);
    let hi = (center + half_width).min(power.len().saturating_sub(1));
    power[lo..=hi].iter().fold(0.0f64, |m, &p| m.max(p))
}

/// Recovers the pitch of a steady segment by scoring every grid value as a
/// harmonic comb against the spectrum. Missing harmonics are punished by the
/// log, which resolves octave confusions between the gender regions.
pub fn estimate_f0(samples: &[f64], rate: f64) -> f64 {
    let (power, bin_hz) = power_spectrum(samples, rate);
    let nyquist = rate / 2.0;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &f0 in &pitch_grid() {
        let mut score = 0.0;
        for k in 1..=N_HARMONICS {
            let freq = k as f64 * f0;
            if freq < nyquist {
                score += (1e-12 + local_peak(&power, bin_hz, freq, 3)).ln();
            }
        }
        if score > best.0 {
            best = (score, f0);
        }
    }
    best.1
}

/// Amplitude of each harmonic of `f0`, measured by Hann-windowed projection.
pub fn harmonic_amplitudes(samples: &[f64], rate: f64, f0: f64) -> Vec<f64> {
    let n = samples.len();
    let denom = (n - 1).max(1) as f64;
    let nyquist = rate / 2.0;
    let mut window_sum = 0.0;
    let window: Vec<f64> = (0..n)
        .map(|i| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos();
            window_sum += w;
            w
        })
        .collect();
    (1..=N_HARMONICS)
        .map(|k| {
            let freq = k as f64 * f0;
            if freq >= nyquist {
                return 0.0;
            }
            let omega = 2.0 * std::f64::consts::PI * freq / rate;
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, (&s, &w)) in samples.iter().zip(&window).enumerate() {
                let phase = omega * i as f64;
                re += s * w * phase.cos();
                im -= s * w * phase.sin();
            }
            2.0 * (re * re + im * im).sqrt() / window_sum
        })
        .collect()
}

fn no_voiced(stage: &str) -> PipelineError {
    PipelineError::Backend {
        stage: stage.into(),
        message: "no voiced segments found in input".into(),
    }
}

/// Timbre embedding: per-syllable harmonic amplitude profiles, each scale
/// normalized, averaged with energy weights. Invariant to overall gain.
pub fn encode_timbre(waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError> {
    let rate = waveform.sample_rate() as f64;
    let segments = segment_voiced(waveform);
    if segments.is_empty() {
        return Err(no_voiced("encoder"));
    }
    let mut acc = vec![0.0; N_HARMONICS];
    for seg in &segments {
        let core = &waveform.samples()[seg.core.clone()];
        let f0 = estimate_f0(core, rate);
        let amps = harmonic_amplitudes(core, rate, f0);
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let energy = core.iter().map(|s| s * s).sum::<f64>();
        for (a, v) in acc.iter_mut().zip(&amps) {
            *a += energy * v / norm;
        }
    }
    SpeakerEmbedding::new(EmbeddingKind::Timbre, acc).map_err(PipelineError::from)
}

/// Prosody embedding: pitch statistics over syllables plus rhythm and energy
/// modulation measures, assembled by [`prosody_stats`] and normalized.
pub fn encode_prosody(waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError> {
    let rate = waveform.sample_rate() as f64;
    let segments = segment_voiced(waveform);
    if segments.is_empty() {
        return Err(no_voiced("encoder"));
    }
    let samples = waveform.samples();
    let mut log_f0s = Vec::with_capacity(segments.len());
    let mut durations = Vec::with_capacity(segments.len());
    let mut rms_values = Vec::with_capacity(segments.len());
    for seg in &segments {
        let core = &samples[seg.core.clone()];
        log_f0s.push(estimate_f0(core, rate).ln());
        durations.push(seg.run.len() as f64 / rate);
        let run = &samples[seg.run.clone()];
        rms_values.push((run.iter().map(|s| s * s).sum::<f64>() / run.len() as f64).sqrt());
    }
    let n = segments.len() as f64;
    let mean_log = log_f0s.iter().sum::<f64>() / n;
    let std_log = (log_f0s.iter().map(|x| (x - mean_log).powi(2)).sum::<f64>() / n).sqrt();
    let total = waveform.duration();
    let voiced: f64 = durations.iter().sum();
    let mean_rms = rms_values.iter().sum::<f64>() / n;
    let energy_mod = if mean_rms > 0.0 {
        (rms_values
            .iter()
            .map(|x| (x - mean_rms).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / mean_rms
    } else {
        0.0
    };
    let stats = prosody_stats(
        mean_log,
        std_log,
        n / total,
        voiced / total,
        voiced / n,
        alternation_score(&log_f0s),
        energy_mod,
    );
    SpeakerEmbedding::new(EmbeddingKind::Prosody, stats).map_err(PipelineError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, Gender};
    use crate::toy::voice::{render_clip, syllable_plan, ToyVoice};

    fn test_voice(id: &str, gender: Gender) -> ToyVoice {
        ToyVoice::sample(id, gender, 1234)
    }

    #[test]
    fn segmentation_finds_every_syllable() {
        let v = test_voice("seg", Gender::Male);
        let text = "counting syllables over here";
        let w = render_clip(&v, text, 5);
        let expected: usize = syllable_plan(text).iter().map(|(_, n)| n).sum();
        let segments = segment_voiced(&w);
        assert_eq!(segments.len(), expected);
        for seg in &segments {
            assert!(seg.core.start > seg.run.start);
            assert!(seg.core.end < seg.run.end);
        }
    }

    #[test]
    fn silence_has_no_segments() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        assert!(segment_voiced(&w).is_empty());
    }

    #[test]
    fn pitch_recovery_is_exact_on_grid() {
        for (id, gender) in [("p1", Gender::Male), ("p2", Gender::Female)] {
            let v = test_voice(id, gender);
            let w = render_clip(&v, "sustained humming tone", 9);
            let segments = segment_voiced(&w);
            assert!(!segments.is_empty());
            for (syllable, seg) in segments.iter().enumerate() {
                let f0 = estimate_f0(&w.samples()[seg.core.clone()], 16_000.0);
                let truth = v.syllable_f0(syllable);
                assert!(
                    (f0 - truth).abs() < 1e-9,
                    "{id} syllable {syllable}: got {f0}, wanted {truth}"
                );
            }
        }
    }

    #[test]
    fn harmonic_amplitudes_recover_ratios() {
        let v = test_voice("amps", Gender::Male);
        let w = render_clip(&v, "aaa", 2);
        let seg = &segment_voiced(&w)[0];
        let core = &w.samples()[seg.core.clone()];
        let f0 = estimate_f0(core, 16_000.0);
        let measured = harmonic_amplitudes(core, 16_000.0, f0);
        let truth = &v.harmonic_amps;
        let ratio0 = measured[0] / truth[0];
        for k in 0..N_HARMONICS {
            let ratio = measured[k] / truth[k];
            assert!(
                (ratio / ratio0 - 1.0).abs() < 0.05,
                "harmonic {k}: ratio {ratio} vs {ratio0}"
            );
        }
    }

    #[test]
    fn timbre_embedding_matches_voice_profile() {
        let v = test_voice("tim", Gender::Female);
        let w = render_clip(&v, "the quick bronze fox jumps", 3);
        let measured = encode_timbre(&w).unwrap();
        let cos = cosine_similarity(&measured, &v.timbre_embedding()).unwrap();
        assert!(cos > 0.995, "measured vs parametric timbre: {cos}");
    }

    #[test]
    fn timbre_embedding_is_gain_invariant() {
        let v = test_voice("gain", Gender::Male);
        let w = render_clip(&v, "testing gain invariance now", 4);
        let half: Vec<f64> = w.samples().iter().map(|s| 0.5 * s).collect();
        let half = Waveform::new(half, w.sample_rate()).unwrap();
        let a = encode_timbre(&w).unwrap();
        let b = encode_timbre(&half).unwrap();
        let cos = cosine_similarity(&a, &b).unwrap();
        assert!(cos > 0.9999, "gain halving moved timbre: {cos}");
    }

    #[test]
    fn prosody_embedding_is_stable_across_takes() {
        let v = test_voice("pro", Gender::Female);
        let a = encode_prosody(&render_clip(&v, "repeat the same sentence again", 1)).unwrap();
        let b = encode_prosody(&render_clip(&v, "repeat the same sentence again", 2)).unwrap();
        let cos = cosine_similarity(&a, &b).unwrap();
        assert!(cos > 0.995, "same voice, different take: {cos}");
    }

    #[test]
    fn prosody_embedding_tracks_parametric_form() {
        let v = test_voice("par", Gender::Male);
        let w = render_clip(&v, "a steady stream of plain words spoken here", 6);
        let measured = encode_prosody(&w).unwrap();
        let cos = cosine_similarity(&measured, &v.prosody_embedding()).unwrap();
        assert!(cos > 0.97, "measured vs parametric prosody: {cos}");
    }

    #[test]
    fn different_genders_differ_in_prosody() {
        let m = test_voice("m", Gender::Male);
        let f = test_voice("f", Gender::Female);
        let text = "identical words for both speakers";
        let pm = encode_prosody(&render_clip(&m, text, 1)).unwrap();
        let pf = encode_prosody(&render_clip(&f, text, 1)).unwrap();
        let lead_m = pm.values()[0];
        let lead_f = pf.values()[0];
        assert!(
            lead_f > lead_m + 0.1,
            "female pitch statistic should sit higher: {lead_f} vs {lead_m}"
        );
    }

    #[test]
    fn encoders_reject_silence() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        assert!(matches!(
            encode_timbre(&w),
            Err(PipelineError::Backend { .. })
        ));
        assert!(matches!(
            encode_prosody(&w),
            Err(PipelineError::Backend { .. })
        ));
    }
}
