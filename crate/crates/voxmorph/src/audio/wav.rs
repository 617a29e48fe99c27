//! PCM-16 mono WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioError, Waveform};

/// Reads a mono WAV file. PCM 16-bit is the expected encoding; IEEE f32 is
/// accepted with out-of-range samples clamped. Returns the waveform and the
/// number of clamped samples.
pub fn read_wav_detailed(path: &Path) -> Result<(Waveform, usize), AudioError> {
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::FormatError {
            path: path.to_path_buf(),
            reason: format!("{} channels, mono required", spec.channels),
        });
    }
    if reader.duration() == 0 {
        return Err(AudioError::FormatError {
            path: path.to_path_buf(),
            reason: "no samples".to_owned(),
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| map_hound(path, e))?
            .into_iter()
            .map(|s| s as f64 / 32768.0)
            .collect(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| map_hound(path, e))?
            .into_iter()
            .map(|s| s as f64)
            .collect(),
        (format, bits) => {
            return Err(AudioError::FormatError {
                path: path.to_path_buf(),
                reason: format!("unsupported encoding {format:?}/{bits}-bit"),
            })
        }
    };
    Waveform::clamping(samples, spec.sample_rate)
}

/// Reads a mono WAV file, discarding the clipping count.
pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    read_wav_detailed(path).map(|(w, _)| w)
}

/// Writes a waveform as PCM 16-bit mono. Quantization error on a write-read
/// round trip is at most one LSB (1/32768) per sample.
pub fn write_wav(waveform: &Waveform, path: &Path) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in waveform.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn map_hound(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => AudioError::FormatError {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}
