//! Waveform container, WAV I/O, resampling, and log-mel analysis.

pub mod mel;
pub mod resample;
pub mod wav;

use std::path::PathBuf;

use thiserror::Error;

/// Canonical internal sample rate in Hz. All analysis and synthesis happens
/// here; ingestion resamples to it.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio format error in {path}: {reason}")]
    FormatError { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input too short: {got:.3} s, need at least {needed:.3} s")]
    TooShort { needed: f64, got: f64 },
    #[error("waveform contains non-finite samples")]
    NonFinite,
    #[error("sample at index {index} is {value}, outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    BadSampleRate,
}

/// Mono audio in [-1, 1] at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Validates samples strictly: finite and within [-1, 1].
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::BadSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NonFinite);
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(AudioError::OutOfRange { index, value });
            }
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// Builds a waveform from possibly hot samples, clamping into [-1, 1].
    /// Returns the number of samples that needed clamping so callers can log
    /// a clipping warning. Non-finite samples are still rejected.
    pub fn clamping(samples: Vec<f64>, sample_rate: u32) -> Result<(Self, usize), AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::BadSampleRate);
        }
        let mut clipped = 0;
        let mut samples = samples;
        for value in &mut samples {
            if !value.is_finite() {
                return Err(AudioError::NonFinite);
            }
            if *value > 1.0 {
                *value = 1.0;
                clipped += 1;
            } else if *value < -1.0 {
                *value = -1.0;
                clipped += 1;
            }
        }
        Ok((
            Waveform {
                samples,
                sample_rate,
            },
            clipped,
        ))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Root mean square amplitude; 0 for an empty waveform.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}
