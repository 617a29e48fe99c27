//! Log-mel spectrogram extraction with an HTK-style triangular filterbank,
//! plus the binary mel-matrix format used to exchange spectrograms with
//! out-of-process backends.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioError, Waveform};

/// Power floor applied before the natural log, so silence maps to
/// `ln(LOG_FLOOR)` instead of negative infinity.
pub const LOG_FLOOR: f64 = 1e-10;

/// `ln` of the power floor; the value digital silence takes in a log-mel.
pub fn floor_log() -> f64 {
    LOG_FLOOR.ln()
}

/// Floors and logs a mel power value.
pub fn log_power(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// Analysis parameters. Defaults: 80 mels, 25 ms window, 10 ms hop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    /// Window length in seconds.
    pub window: f64,
    /// Hop length in seconds.
    pub hop: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 80,
            window: 0.025,
            hop: 0.010,
        }
    }
}

impl MelConfig {
    pub fn win_samples(&self, sample_rate: u32) -> usize {
        (self.window * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop * sample_rate as f64).round() as usize
    }
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank from 0 Hz to Nyquist. Adjacent filters cross at
/// each other's centers, so between two centers their responses sum to 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels + 2` band edges in Hz; filter `b` rises over
    /// `edges[b]..edges[b+1]` and falls over `edges[b+1]..edges[b+2]`.
    edges_hz: Vec<f64>,
    n_mels: usize,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_mels: usize) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges_hz = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        MelFilterbank { edges_hz, n_mels }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Center frequency of filter `b` in Hz.
    pub fn center_hz(&self, b: usize) -> f64 {
        self.edges_hz[b + 1]
    }

    /// Continuous triangular response of filter `b` at frequency `f`.
    pub fn response(&self, b: usize, f: f64) -> f64 {
        let (lo, center, hi) = (self.edges_hz[b], self.edges_hz[b + 1], self.edges_hz[b + 2]);
        if f <= lo || f >= hi {
            0.0
        } else if f <= center {
            (f - lo) / (center - lo)
        } else {
            (hi - f) / (hi - center)
        }
    }

    /// The at-most-two filters with nonzero response at `f`, with weights.
    pub fn bands_at(&self, f: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2);
        // Locate the edge interval containing f, then test its two filters.
        let i = match self
            .edges_hz
            .binary_search_by(|e| e.partial_cmp(&f).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        for b in [i.wrapping_sub(1), i] {
            if b < self.n_mels {
                let w = self.response(b, f);
                if w > 0.0 {
                    out.push((b, w));
                }
            }
        }
        out
    }

    /// Sparse per-filter weights over FFT bins for a given transform size.
    pub fn bin_weights(&self, n_fft: usize, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
        let bin_hz = sample_rate as f64 / n_fft as f64;
        (0..self.n_mels)
            .map(|b| {
                let lo_bin = (self.edges_hz[b] / bin_hz).floor() as usize;
                let hi_bin = ((self.edges_hz[b + 2] / bin_hz).ceil() as usize).min(n_fft / 2);
                (lo_bin..=hi_bin)
                    .filter_map(|k| {
                        let w = self.response(b, k as f64 * bin_hz);
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect()
    }
}

/// A log-mel matrix with the framing parameters that produced it. Also used
/// for synthesized (painted) mels and flow-integration outputs, which share
/// the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    data: Vec<f64>,
    n_frames: usize,
    n_mels: usize,
    sample_rate: u32,
    win_samples: usize,
    hop_samples: usize,
}

impl LogMelSpectrogram {
    pub fn from_data(
        data: Vec<f64>,
        n_frames: usize,
        n_mels: usize,
        sample_rate: u32,
        win_samples: usize,
        hop_samples: usize,
    ) -> Result<Self, AudioError> {
        if data.len() != n_frames * n_mels {
            return Err(AudioError::FormatError {
                path: Default::default(),
                reason: format!(
                    "mel data length {} does not match {n_frames}x{n_mels}",
                    data.len()
                ),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(LogMelSpectrogram {
            data,
            n_frames,
            n_mels,
            sample_rate,
            win_samples,
            hop_samples,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn win_samples(&self) -> usize {
        self.win_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    /// Row-major frame data, `n_frames * n_mels` long.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_mels..(i + 1) * self.n_mels]
    }

    /// Sample index of the center of frame `i`.
    pub fn frame_center(&self, i: usize) -> usize {
        i * self.hop_samples + self.win_samples / 2
    }

    /// Waveform length in samples that frames of this shape cover.
    pub fn covered_samples(&self) -> usize {
        if self.n_frames == 0 {
            0
        } else {
            (self.n_frames - 1) * self.hop_samples + self.win_samples
        }
    }
}

/// Extracts a log-mel spectrogram: Hann-windowed power spectrum, triangular
/// mel filterbank, natural log with a fixed power floor.
pub fn log_mel(waveform: &Waveform, config: &MelConfig) -> Result<LogMelSpectrogram, AudioError> {
    let rate = waveform.sample_rate();
    let win = config.win_samples(rate);
    let hop = config.hop_samples(rate);
    let samples = waveform.samples();
    if samples.len() < win {
        return Err(AudioError::TooShort {
            needed: config.window,
            got: waveform.duration(),
        });
    }
    let n_frames = (samples.len() - win) / hop + 1;
    let n_fft = win.next_power_of_two();
    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
        .collect();
    let filterbank = MelFilterbank::new(rate, config.n_mels);
    let weights = filterbank.bin_weights(n_fft, rate);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut data = Vec::with_capacity(n_frames * config.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for frame in 0..n_frames {
        let start = frame * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < win {
                Complex::new(samples[start + i] * hann[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect();
        for bins in &weights {
            let mel_power: f64 = bins.iter().map(|&(k, w)| w * power[k]).sum();
            data.push(log_power(mel_power));
        }
    }
    LogMelSpectrogram::from_data(data, n_frames, config.n_mels, rate, win, hop)
}

const MEL_MAGIC: &[u8; 4] = b"VXM1";

/// Writes a mel matrix: magic, five little-endian u32 fields (frames, mels,
/// sample rate, hop, window), then row-major little-endian f32 data.
pub fn write_mel(mel: &LogMelSpectrogram, path: &Path) -> Result<(), AudioError> {
    let io_err = |source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut payload = Vec::with_capacity(24 + mel.data.len() * 4);
    payload.extend_from_slice(MEL_MAGIC);
    for v in [
        mel.n_frames as u32,
        mel.n_mels as u32,
        mel.sample_rate,
        mel.hop_samples as u32,
        mel.win_samples as u32,
    ] {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for v in &mel.data {
        payload.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&payload).map_err(io_err)
}

pub fn read_mel(path: &Path) -> Result<LogMelSpectrogram, AudioError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| AudioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let format_err = |reason: String| AudioError::FormatError {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 24 || &bytes[..4] != MEL_MAGIC {
        return Err(format_err("not a mel matrix file".into()));
    }
    let field = |i: usize| {
        u32::from_le_bytes([
            bytes[4 + i * 4],
            bytes[5 + i * 4],
            bytes[6 + i * 4],
            bytes[7 + i * 4],
        ])
    };
    let (n_frames, n_mels) = (field(0) as usize, field(1) as usize);
    let (sample_rate, hop, win) = (field(2), field(3) as usize, field(4) as usize);
    let expected = 24 + n_frames * n_mels * 4;
    if bytes.len() != expected {
        return Err(format_err(format!(
            "payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LogMelSpectrogram::from_data(data, n_frames, n_mels, sample_rate, win, hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::CANONICAL_RATE;

    fn sine(freq: f64, amplitude: f64, seconds: f64) -> Waveform {
        let rate = CANONICAL_RATE;
        let n = (seconds * rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn mel_scale_round_trips() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        for f in [55.0, 440.0, 1000.0, 4000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn adjacent_filter_responses_sum_to_one_between_centers() {
        let fb = MelFilterbank::new(CANONICAL_RATE, 80);
        for b in 0..79 {
            let lo = fb.center_hz(b);
            let hi = fb.center_hz(b + 1);
            for i in 1..10 {
                let f = lo + (hi - lo) * i as f64 / 10.0;
                let sum = fb.response(b, f) + fb.response(b + 1, f);
                assert!((sum - 1.0).abs() < 1e-12, "filters {b},{} at {f} Hz", b + 1);
            }
        }
    }

    #[test]
    fn bands_at_matches_response() {
        let fb = MelFilterbank::new(CANONICAL_RATE, 80);
        for f in [30.0, 100.0, 440.0, 1000.0, 3920.0, 7000.0] {
            let bands = fb.bands_at(f);
            assert!(!bands.is_empty(), "no band at {f} Hz");
            let total: f64 = bands.iter().map(|(_, w)| w).sum();
            assert!(
                (total - 1.0).abs() < 1e-9,
                "weights at {f} Hz sum to {total}"
            );
            for &(b, w) in &bands {
                assert!((fb.response(b, f) - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn silence_hits_the_floor_everywhere() {
        let w = Waveform::new(vec![0.0; 16_000], CANONICAL_RATE).unwrap();
        let mel = log_mel(&w, &MelConfig::default()).unwrap();
        assert_eq!(mel.n_mels(), 80);
        for &v in mel.data() {
            assert_eq!(v, floor_log());
        }
    }

    #[test]
    fn frame_count_formula() {
        let w = Waveform::new(vec![0.0; 16_000], CANONICAL_RATE).unwrap();
        let mel = log_mel(&w, &MelConfig::default()).unwrap();
        // (16000 - 400) / 160 + 1
        assert_eq!(mel.n_frames(), 98);
        assert_eq!(mel.covered_samples(), 97 * 160 + 400);
    }

    #[test]
    fn tone_argmax_is_stable_and_near_the_tone() {
        let w = sine(1000.0, 0.5, 1.0);
        let mel = log_mel(&w, &MelConfig::default()).unwrap();
        let fb = MelFilterbank::new(CANONICAL_RATE, 80);
        let expected: usize = (0..80)
            .max_by(|&a, &b| {
                fb.response(a, 1000.0)
                    .partial_cmp(&fb.response(b, 1000.0))
                    .unwrap()
            })
            .unwrap();
        for i in 0..mel.n_frames() {
            let frame = mel.frame(i);
            let argmax = (0..80)
                .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                .unwrap();
            assert!(
                argmax.abs_diff(expected) <= 1,
                "frame {i}: argmax {argmax}, expected near {expected}"
            );
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let w = Waveform::new(vec![0.1; 300], CANONICAL_RATE).unwrap();
        assert!(matches!(
            log_mel(&w, &MelConfig::default()),
            Err(AudioError::TooShort { .. })
        ));
    }

    #[test]
    fn deterministic_across_calls() {
        let w = sine(700.0, 0.4, 0.5);
        let a = log_mel(&w, &MelConfig::default()).unwrap();
        let b = log_mel(&w, &MelConfig::default()).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn prepending_one_hop_of_silence_shifts_frames() {
        let cfg = MelConfig::default();
        let w = sine(600.0, 0.4, 0.4);
        let mel = log_mel(&w, &cfg).unwrap();
        let hop = cfg.hop_samples(CANONICAL_RATE);
        let mut shifted = vec![0.0; hop];
        shifted.extend_from_slice(w.samples());
        let mel2 = log_mel(&Waveform::new(shifted, CANONICAL_RATE).unwrap(), &cfg).unwrap();
        assert_eq!(mel2.n_frames(), mel.n_frames() + 1);
        for i in 0..mel.n_frames() {
            for (a, b) in mel.frame(i).iter().zip(mel2.frame(i + 1)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn doubling_amplitude_raises_log_power_by_ln4() {
        let cfg = MelConfig::default();
        let quiet = log_mel(&sine(800.0, 0.15, 0.3), &cfg).unwrap();
        let loud = log_mel(&sine(800.0, 0.30, 0.3), &cfg).unwrap();
        let ln4 = 4f64.ln();
        let mut checked = 0;
        for (a, b) in quiet.data().iter().zip(loud.data()) {
            if *a > floor_log() + 1e-9 {
                assert!((b - a - ln4).abs() < 1e-6, "{b} - {a} != ln4");
                checked += 1;
            }
        }
        assert!(checked > 100, "only {checked} entries above the floor");
    }

    #[test]
    fn mel_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mel");
        let mel = log_mel(&sine(500.0, 0.3, 0.2), &MelConfig::default()).unwrap();
        write_mel(&mel, &path).unwrap();
        let back = read_mel(&path).unwrap();
        assert_eq!(back.n_frames(), mel.n_frames());
        assert_eq!(back.n_mels(), mel.n_mels());
        assert_eq!(back.sample_rate(), mel.sample_rate());
        assert_eq!(back.hop_samples(), mel.hop_samples());
        assert_eq!(back.win_samples(), mel.win_samples());
        for (a, b) in mel.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn read_mel_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mel");
        std::fs::write(&path, b"not a mel file at all").unwrap();
        assert!(matches!(
            read_mel(&path),
            Err(AudioError::FormatError { .. })
        ));
    }
}
