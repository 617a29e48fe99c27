//! In-process backend implementations over the toy voice model.
//!
//! The five stages form a closed loop: what the token generator and mel
//! painter encode, the vocoder and the analysis encoders can recover. That
//! makes end-to-end identity claims checkable without any learned model.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::mel::{floor_log, LogMelSpectrogram, MelFilterbank, LOG_FLOOR};
use crate::audio::{Waveform, CANONICAL_RATE};
use crate::embedding::{EmbeddingKind, SpeakerEmbedding};
use crate::interpolation::FusedVector;
use crate::pipeline::backend::{
    AsvEncoder, BackendId, EncoderBackend, MelDecoder, PipelineError, SynthesisOptions,
    TokenGenerator, TokenSequence, Vocoder,
};
use crate::pipeline::flow::{integrate, StraightToTarget};
use crate::seeding::{derive_seed, rng_for};
use crate::toy::analysis::{encode_prosody, encode_timbre};
use crate::toy::voice::{newman_phase, pitch_grid, N_HARMONICS, PROSODY_DIM, VOICED_FRACTION};

/// Toy token vocabulary size.
pub const TOY_VOCAB: u32 = 256;

/// Number of prefix tokens carrying quantized prosody.
pub const PREFIX_LEN: usize = 8;

/// Quantization levels per prefix slot; slot `i` owns tokens
/// `i * 16 .. (i + 1) * 16`.
pub const PREFIX_BINS: u32 = 16;

/// First content token; content tokens decorate one syllable each.
pub const CONTENT_BASE: u32 = 128;

/// Number of distinct content tokens.
pub const CONTENT_SPAN: u32 = 96;

/// Shortest input the toy encoders accept, seconds.
pub const TOY_MIN_DURATION: f64 = 0.5;

/// Linear gain applied to painted harmonic amplitudes.
const PAINT_GAIN: f64 = 0.25;

/// Strength of the off-manifold artifact: a fused timbre whose norm is off
/// the unit sphere by `d` is painted with its amplitudes perturbed by
/// `C * d` along a fixed pattern. Geodesic fusion keeps `d` at rounding
/// level, so only non-normalized fusion picks up the distortion.
const ARTIFACT_STRENGTH: f64 = 40.0;

/// Frames of silence painted before the first and after the last syllable.
const LEAD_FRAMES: usize = 3;

/// A frame counts as silent below this total linear power.
const SILENCE_GATE: f64 = 1e-4;

/// Pitch patterns selectable by the sixth prefix slot.
const PAINT_PATTERNS: [[i8; 4]; 8] = [
    [0, 0, 0, 0],
    [1, -1, 1, -1],
    [2, 0, -2, 0],
    [-1, 0, 1, 0],
    [0, 1, 0, -1],
    [-2, -1, 1, 2],
    [1, 2, -1, -2],
    [0, 2, 0, -2],
];

/// Amplitude profile used as the unconditional flow target.
fn neutral_profile() -> Vec<f64> {
    let amps: Vec<f64> = (0..N_HARMONICS).map(|k| (-0.25 * k as f64).exp()).collect();
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    amps.into_iter().map(|a| a / norm).collect()
}

fn quantize(x: f64) -> u32 {
    (((x + 1.0) / 2.0 * PREFIX_BINS as f64).floor()).clamp(0.0, PREFIX_BINS as f64 - 1.0) as u32
}

fn dequantize(q: u32) -> f64 {
    (q as f64 + 0.5) / (PREFIX_BINS as f64 / 2.0) - 1.0
}

/// The toy dual encoder.
#[derive(Debug, Clone, Default)]
pub struct ToyEncoder;

impl EncoderBackend for ToyEncoder {
    fn id(&self) -> BackendId {
        BackendId::new("encoder", "toy-encoder", "1")
    }

    fn prosody_dim(&self) -> usize {
        PROSODY_DIM
    }

    fn timbre_dim(&self) -> usize {
        N_HARMONICS
    }

    fn min_duration(&self) -> f64 {
        TOY_MIN_DURATION
    }

    fn reentrant(&self) -> bool {
        true
    }

    fn extract(
        &self,
        waveform: &Waveform,
    ) -> Result<(SpeakerEmbedding, SpeakerEmbedding), PipelineError> {
        if waveform.duration() < TOY_MIN_DURATION {
            return Err(PipelineError::TooShort {
                needed: TOY_MIN_DURATION,
                got: waveform.duration(),
            });
        }
        Ok((encode_prosody(waveform)?, encode_timbre(waveform)?))
    }
}

/// The toy token generator: eight prefix tokens quantize the fused prosody
/// vector, then one content token per syllable of the text.
#[derive(Debug, Clone, Default)]
pub struct ToyTokenGenerator;

impl TokenGenerator for ToyTokenGenerator {
    fn id(&self) -> BackendId {
        BackendId::new("tokens", "toy-tokens", "1")
    }

    fn vocab_size(&self) -> u32 {
        TOY_VOCAB
    }

    fn reentrant(&self) -> bool {
        true
    }

    fn generate(
        &self,
        text: &str,
        prosody: &FusedVector,
        seed: u64,
    ) -> Result<TokenSequence, PipelineError> {
        if prosody.kind() != EmbeddingKind::Prosody {
            return Err(PipelineError::ContractViolation {
                stage: "tokens".into(),
                message: format!("expected a prosody vector, got {}", prosody.kind()),
            });
        }
        if prosody.values().len() != PROSODY_DIM {
            return Err(PipelineError::ContractViolation {
                stage: "tokens".into(),
                message: format!(
                    "toy token generator needs prosody dim {PROSODY_DIM}, got {}",
                    prosody.values().len()
                ),
            });
        }
        if text.trim().is_empty() {
            return TokenSequence::new(Vec::new(), TOY_VOCAB);
        }
        let mut tokens = Vec::new();
        for (i, &p) in prosody.values().iter().enumerate() {
            tokens.push(i as u32 * PREFIX_BINS + quantize(p));
        }
        for (word, n_syl) in crate::toy::voice::syllable_plan(text) {
            for syl in 0..n_syl {
                let h = derive_seed(seed, &["content", &word, &syl.to_string()]);
                tokens.push(CONTENT_BASE + (h % CONTENT_SPAN as u64) as u32);
            }
        }
        TokenSequence::new(tokens, TOY_VOCAB)
    }
}

/// One syllable recovered from a content token.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SyllableSpec {
    dur_factor: f64,
    pitch_offset: i8,
}

/// Synthesis plan recovered from a token sequence.
#[derive(Debug, Clone, PartialEq)]
struct PaintPlan {
    base_index: usize,
    rate: f64,
    pattern: [i8; 4],
    syllables: Vec<SyllableSpec>,
}

fn decode_plan(tokens: &TokenSequence) -> PaintPlan {
    let toks = tokens.tokens();
    let mut q = [PREFIX_BINS / 2; PREFIX_LEN];
    if toks.len() >= PREFIX_LEN {
        let well_formed = toks[..PREFIX_LEN]
            .iter()
            .enumerate()
            .all(|(i, &t)| t / PREFIX_BINS == i as u32);
        if well_formed {
            for (i, slot) in q.iter_mut().enumerate() {
                *slot = toks[i] % PREFIX_BINS;
            }
        }
    }
    let p = |i: usize| dequantize(q[i]);
    let grid_len = pitch_grid().len();
    let base_index = ((p(0) / 0.7).clamp(0.0, 1.0) * (grid_len - 1) as f64).round() as usize;
    let rate = 2.5 + (p(2) / 0.45).clamp(0.0, 1.0) * 1.5;
    let pattern = PAINT_PATTERNS[(q[5] % 8) as usize];
    let syllables = toks
        .iter()
        .filter(|&&t| t >= CONTENT_BASE)
        .map(|&t| {
            let c = t - CONTENT_BASE;
            SyllableSpec {
                dur_factor: 0.85 + ((c >> 3) % 12) as f64 / 11.0 * 0.3,
                pitch_offset: ((c % 5) as i8) - 2,
            }
        })
        .collect();
    PaintPlan {
        base_index,
        rate,
        pattern,
        syllables,
    }
}

/// The amplitude profile actually painted for a fused timbre: its unit
/// direction, plus the off-manifold artifact scaled by how far the fused
/// norm sits from one.
pub fn conditioned_profile(fused: &FusedVector) -> Result<Vec<f64>, PipelineError> {
    if fused.kind() != EmbeddingKind::Timbre {
        return Err(PipelineError::ContractViolation {
            stage: "decoder".into(),
            message: format!("expected a timbre vector, got {}", fused.kind()),
        });
    }
    if fused.values().len() != N_HARMONICS {
        return Err(PipelineError::ContractViolation {
            stage: "decoder".into(),
            message: format!(
                "toy decoder needs timbre dim {N_HARMONICS}, got {}",
                fused.values().len()
            ),
        });
    }
    let norm = fused.norm();
    if norm < 1e-9 {
        return Err(PipelineError::ContractViolation {
            stage: "decoder".into(),
            message: "fused timbre has vanishing norm".into(),
        });
    }
    let off = (1.0 - norm).abs();
    let artifact = ARTIFACT_STRENGTH * off / (N_HARMONICS as f64).sqrt();
    Ok(fused
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (v / norm + sign * artifact).max(0.0)
        })
        .collect())
}

/// Lookup oversampling for the window transform, in points per FFT bin.
const OVERSAMPLE: usize = 16;

/// Per-band power response of a unit-amplitude sinusoid, matched to the
/// exact analysis path of [`log_mel`](crate::audio::mel::log_mel): the same
/// Hann window, zero-padded FFT power spectrum, and triangular band weights.
/// Painting through this kernel and inverting against it keeps synthesized
/// and measured mels interchangeable.
struct HarmonicKernel {
    n_fft: usize,
    bin_hz: f64,
    /// `|W|^2` of the window's zero-padded transform, sampled every
    /// `1 / OVERSAMPLE` of an FFT bin; indexed by distance from the carrier.
    window_power: Vec<f64>,
    /// FFT-bin weights per mel band, as `log_mel` applies them.
    band_bins: Vec<Vec<(usize, f64)>>,
    nyquist: f64,
    /// Running sum of the squared window, for onset/offset energy ramps.
    energy_cum: Vec<f64>,
}

impl HarmonicKernel {
    fn new(sample_rate: u32, win: usize, n_mels: usize) -> Self {
        let n_fft = win.next_power_of_two();
        let padded = n_fft * OVERSAMPLE;
        let mut buf = vec![Complex::new(0.0, 0.0); padded];
        let mut energy_cum = Vec::with_capacity(win + 1);
        energy_cum.push(0.0);
        for i in 0..win {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos();
            buf[i] = Complex::new(w, 0.0);
            energy_cum.push(energy_cum[i] + w * w);
        }
        FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
        let window_power = buf[..=padded / 2].iter().map(|c| c.norm_sqr()).collect();
        let bank = MelFilterbank::new(sample_rate, n_mels);
        HarmonicKernel {
            n_fft,
            bin_hz: sample_rate as f64 / n_fft as f64,
            window_power,
            band_bins: bank.bin_weights(n_fft, sample_rate),
            nyquist: sample_rate as f64 / 2.0,
            energy_cum,
        }
    }

    fn window_power_at(&self, d_bins: f64) -> f64 {
        let idx = (d_bins.abs() * OVERSAMPLE as f64).round() as usize;
        self.window_power.get(idx).copied().unwrap_or(0.0)
    }

    /// Fraction of the window's energy inside `span`, for the analysis frame
    /// starting at sample `frame_start`. This is the squared gain a frame
    /// measures at a tone's onset or offset.
    fn overlap_gain2(&self, frame_start: usize, span: (usize, usize)) -> f64 {
        let win = self.energy_cum.len() - 1;
        let lo = span.0.max(frame_start);
        let hi = span.1.min(frame_start + win);
        if hi <= lo {
            return 0.0;
        }
        (self.energy_cum[hi - frame_start] - self.energy_cum[lo - frame_start])
            / self.energy_cum[win]
    }

    /// Mel-band powers of a unit-amplitude sinusoid at `freq`, written into
    /// `out`. Both the carrier and its negative-frequency image contribute.
    fn column(&self, freq: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if freq <= 0.0 || freq >= self.nyquist {
            return;
        }
        let center = freq / self.bin_hz;
        for (b, bins) in self.band_bins.iter().enumerate() {
            let mut power = 0.0;
            for &(k, w) in bins {
                let kb = k as f64;
                let direct = self.window_power_at(kb - center);
                let image_d = (kb + center).min(self.n_fft as f64 - kb - center);
                power += w * 0.25 * (direct + self.window_power_at(image_d));
            }
            out[b] = power;
        }
    }

    /// Band powers per unit squared amplitude, one column per harmonic.
    fn response_matrix(&self, f0: f64, n_harmonics: usize) -> nalgebra::DMatrix<f64> {
        let n_mels = self.band_bins.len();
        let mut matrix = nalgebra::DMatrix::zeros(n_mels, n_harmonics);
        let mut col = vec![0.0; n_mels];
        for k in 0..n_harmonics {
            self.column((k + 1) as f64 * f0, &mut col);
            for (b, &v) in col.iter().enumerate() {
                matrix[(b, k)] = v;
            }
        }
        matrix
    }
}

/// Paints the mel matrix for a plan and an amplitude profile: one steady
/// harmonic stack per syllable, spread through the analysis window's
/// spectral footprint, with window-energy ramps at every onset and offset.
fn paint(plan: &PaintPlan, profile: &[f64], options: &SynthesisOptions) -> (Vec<f64>, usize) {
    let cfg = &options.mel;
    let win = cfg.win_samples(CANONICAL_RATE);
    let hop = cfg.hop_samples(CANONICAL_RATE);
    let hop_dur = hop as f64 / CANONICAL_RATE as f64;
    let n_mels = cfg.n_mels;
    let kernel = HarmonicKernel::new(CANONICAL_RATE, win, n_mels);
    let grid = pitch_grid();

    // Voiced spans in sample coordinates, hop-aligned: (start, end, f0).
    let mut spans: Vec<(usize, usize, f64)> = Vec::new();
    let mut frame = LEAD_FRAMES;
    for (i, syl) in plan.syllables.iter().enumerate() {
        let idx = (plan.base_index as isize
            + plan.pattern[i % plan.pattern.len()] as isize
            + syl.pitch_offset as isize)
            .clamp(0, grid.len() as isize - 1) as usize;
        let slot = 1.0 / plan.rate;
        let n_voiced =
            ((slot * VOICED_FRACTION * syl.dur_factor / hop_dur).round() as usize).max(6);
        let n_gap = ((slot * (1.0 - VOICED_FRACTION) / hop_dur).round() as usize).max(4);
        spans.push((frame * hop, (frame + n_voiced) * hop, grid[idx]));
        frame += n_voiced + n_gap;
    }
    let n_frames = if plan.syllables.is_empty() {
        2 * LEAD_FRAMES
    } else {
        frame + LEAD_FRAMES
    };

    let amp2 = nalgebra::DVector::from_iterator(
        profile.len(),
        profile.iter().map(|&v| (PAINT_GAIN * v) * (PAINT_GAIN * v)),
    );
    let mut stacks: HashMap<u64, nalgebra::DVector<f64>> = HashMap::new();

    let mut data = Vec::with_capacity(n_frames * n_mels);
    for f in 0..n_frames {
        let frame_start = f * hop;
        let lit = spans.iter().find_map(|&(on, off, f0)| {
            let g2 = kernel.overlap_gain2(frame_start, (on, off));
            (g2 > 0.0).then_some((f0, g2))
        });
        match lit {
            None => data.extend(std::iter::repeat_n(floor_log(), n_mels)),
            Some((f0, g2)) => {
                let powers = stacks
                    .entry(f0.to_bits())
                    .or_insert_with(|| kernel.response_matrix(f0, profile.len()) * &amp2);
                data.extend(powers.iter().map(|&p| (p * g2).max(LOG_FLOOR).ln()));
            }
        }
    }
    (data, n_frames)
}

/// The toy mel decoder: decodes the plan from tokens, paints conditional and
/// unconditional targets, and integrates the straight flow between them.
#[derive(Debug, Clone, Default)]
pub struct ToyMelDecoder;

impl MelDecoder for ToyMelDecoder {
    fn id(&self) -> BackendId {
        BackendId::new("decoder", "toy-decoder", "1")
    }

    fn reentrant(&self) -> bool {
        true
    }

    fn synthesize(
        &self,
        tokens: &TokenSequence,
        timbre: &FusedVector,
        options: &SynthesisOptions,
        seed: u64,
    ) -> Result<LogMelSpectrogram, PipelineError> {
        let plan = decode_plan(tokens);
        let profile = conditioned_profile(timbre)?;
        let (cond, n_frames) = paint(&plan, &profile, options);
        let (uncond, _) = paint(&plan, &neutral_profile(), options);
        let mut rng = rng_for(seed, &["decoder-noise"]);
        let x0: Vec<f64> = (0..cond.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let field = StraightToTarget {
            target_cond: cond,
            target_uncond: uncond,
        };
        let data = integrate(&x0, &field, options.flow_steps, options.guidance_scale)?;
        let cfg = &options.mel;
        Ok(LogMelSpectrogram::from_data(
            data,
            n_frames,
            cfg.n_mels,
            CANONICAL_RATE,
            cfg.win_samples(CANONICAL_RATE),
            cfg.hop_samples(CANONICAL_RATE),
        )?)
    }
}

/// The toy vocoder: segments the mel into voiced runs, recovers each run's
/// pitch by comb search and its harmonic amplitudes by least squares against
/// the shared spectral kernel, then renders one steady harmonic stack per
/// run. Re-measuring the output reproduces the input mel, ramps included.
#[derive(Debug, Clone, Default)]
pub struct ToyVocoder;

impl Vocoder for ToyVocoder {
    fn id(&self) -> BackendId {
        BackendId::new("vocoder", "toy-vocoder", "1")
    }

    fn reentrant(&self) -> bool {
        true
    }

    fn vocode(&self, mel: &LogMelSpectrogram) -> Result<Waveform, PipelineError> {
        if mel.n_frames() == 0 {
            return Ok(Waveform::new(Vec::new(), mel.sample_rate())?);
        }
        let kernel = HarmonicKernel::new(mel.sample_rate(), mel.win_samples(), mel.n_mels());
        let candidates: Vec<PitchCandidate> = pitch_grid()
            .iter()
            .map(|&f0| {
                let responses = kernel.response_matrix(f0, N_HARMONICS);
                PitchCandidate {
                    f0,
                    svd: responses.clone().svd(true, true),
                    responses,
                }
            })
            .collect();

        let frame_power: Vec<f64> = (0..mel.n_frames())
            .map(|f| mel.frame(f).iter().map(|&v| v.exp()).sum())
            .collect();
        let mut samples = vec![0.0f64; mel.covered_samples()];

        let mut f = 0;
        while f < mel.n_frames() {
            if frame_power[f] <= SILENCE_GATE {
                f += 1;
                continue;
            }
            let start = f;
            while f < mel.n_frames() && frame_power[f] > SILENCE_GATE {
                f += 1;
            }
            let end = f; // exclusive
            render_run(
                mel,
                &kernel,
                &candidates,
                &frame_power,
                start,
                end,
                &mut samples,
            );
        }

        let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        if peak > 0.99 {
            let scale = 0.99 / peak;
            samples.iter_mut().for_each(|s| *s *= scale);
        }
        Ok(Waveform::new(samples, mel.sample_rate())?)
    }
}

/// One pitch-grid value with its response matrix factored for reuse across
/// the runs of a single mel.
struct PitchCandidate {
    f0: f64,
    responses: nalgebra::DMatrix<f64>,
    svd: nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

fn render_run(
    mel: &LogMelSpectrogram,
    kernel: &HarmonicKernel,
    candidates: &[PitchCandidate],
    frame_power: &[f64],
    start: usize,
    end: usize,
    samples: &mut [f64],
) {
    let n_mels = mel.n_mels();
    let hop = mel.hop_samples();
    let rate = mel.sample_rate() as f64;

    // Plateau frames saw the tone through their whole window; the rest are
    // onset and offset ramps. Averaging the plateau gives clean band powers.
    let peak = frame_power[start..end]
        .iter()
        .fold(0.0f64, |m, &p| m.max(p));
    let plateau: Vec<usize> = (start..end)
        .filter(|&f| frame_power[f] >= 0.9 * peak)
        .collect();
    let mut mean_power = vec![0.0f64; n_mels];
    for &f in &plateau {
        for (b, &v) in mel.frame(f).iter().enumerate() {
            mean_power[b] += v.exp();
        }
    }
    mean_power
        .iter_mut()
        .for_each(|p| *p /= plateau.len() as f64);
    let plateau_total: f64 = mean_power.iter().sum();
    if plateau_total <= 0.0 {
        return;
    }

    // Pitch and amplitudes at once: for every grid candidate, solve the
    // nonnegative harmonic stack that best explains the band powers, and
    // keep the one with the smallest residual. Harmonic stacks at the wrong
    // pitch leave power in the wrong footprints and cannot fit.
    let p = nalgebra::DVector::from_row_slice(&mean_power);
    let mut best: Option<(f64, f64, nalgebra::DVector<f64>)> = None;
    for cand in candidates {
        let x = match cand.svd.solve(&p, 1e-12) {
            Ok(x) => x.map(|v| v.max(0.0)),
            Err(_) => continue,
        };
        let residual = (&cand.responses * &x - &p).norm_squared();
        if best.as_ref().is_none_or(|(r, ..)| residual < *r) {
            best = Some((residual, cand.f0, x));
        }
    }
    let Some((_, f0, x)) = best else {
        return;
    };
    let amps: Vec<f64> = x.iter().map(|&v| v.sqrt()).collect();

    // Ramp energies at a hop-aligned tone's edges sum to whole frames, so
    // the run's total power counts its tone frames; the first plateau frame
    // marks where the tone starts.
    let energy: f64 = frame_power[start..end].iter().sum();
    let n_tone = (energy / plateau_total).round().max(1.0) as usize;
    let on = plateau
        .first()
        .map_or(start * hop, |&f| f * hop)
        .min(samples.len());
    let off = (on + n_tone * hop).min(samples.len());

    for (i, sample) in samples[on..off].iter_mut().enumerate() {
        let t = i as f64 / rate;
        let mut s = 0.0;
        for (k, &a) in amps.iter().enumerate() {
            let freq = (k + 1) as f64 * f0;
            if freq < kernel.nyquist && a > 0.0 {
                s += a * (2.0 * std::f64::consts::PI * freq * t + newman_phase(k)).sin();
            }
        }
        *sample += s;
    }
}

/// The toy verification encoder: the timbre half of the dual encoder.
#[derive(Debug, Clone, Default)]
pub struct ToyAsv;

impl AsvEncoder for ToyAsv {
    fn id(&self) -> BackendId {
        BackendId::new("asv", "toy-asv", "1")
    }

    fn min_duration(&self) -> f64 {
        TOY_MIN_DURATION
    }

    fn reentrant(&self) -> bool {
        true
    }

    fn embed(&self, waveform: &Waveform) -> Result<SpeakerEmbedding, PipelineError> {
        if waveform.duration() < TOY_MIN_DURATION {
            return Err(PipelineError::TooShort {
                needed: TOY_MIN_DURATION,
                got: waveform.duration(),
            });
        }
        encode_timbre(waveform)
    }
}
