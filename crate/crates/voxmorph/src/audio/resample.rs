//! Band-limited sample-rate conversion via windowed-sinc interpolation.

use super::{AudioError, Waveform};

/// Zero crossings of the sinc kernel on each side. More crossings sharpen
/// the transition band at linear cost per output sample.
const KERNEL_ZEROS: usize = 16;

/// Resamples to `target_rate` with a Blackman-windowed sinc kernel. When
/// downsampling the kernel cutoff shifts to the new Nyquist frequency.
/// Identical rates return the input unchanged.
pub fn resample(waveform: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::BadSampleRate);
    }
    let src_rate = waveform.sample_rate();
    if src_rate == target_rate {
        return Ok(waveform.clone());
    }
    let input = waveform.samples();
    if input.is_empty() {
        return Waveform::new(Vec::new(), target_rate);
    }
    let ratio = target_rate as f64 / src_rate as f64;
    // Cutoff scale: 1 when upsampling, target/source when downsampling.
    let scale = ratio.min(1.0);
    let half_width = KERNEL_ZEROS as f64 / scale;
    let n_out = (input.len() as f64 * ratio).round() as usize;

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        // Position of this output sample in input-index coordinates.
        let x = n as f64 / ratio;
        let lo = ((x - half_width).ceil() as isize).max(0) as usize;
        let hi = ((x + half_width).floor() as isize).min(input.len() as isize - 1) as usize;
        let mut acc = 0.0;
        for (k, &sample) in input.iter().enumerate().take(hi + 1).skip(lo) {
            let u = scale * (x - k as f64);
            acc += sample * sinc(u) * blackman(u / KERNEL_ZEROS as f64);
        }
        out.push((scale * acc).clamp(-1.0, 1.0));
    }
    Waveform::new(out, target_rate)
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        1.0
    } else {
        let pu = std::f64::consts::PI * u;
        pu.sin() / pu
    }
}

/// Blackman window over normalized position `v` in [-1, 1]; zero outside.
fn blackman(v: f64) -> f64 {
    if v.abs() >= 1.0 {
        return 0.0;
    }
    let pv = std::f64::consts::PI * v;
    0.42 + 0.5 * pv.cos() + 0.08 * (2.0 * pv).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::CANONICAL_RATE;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, amplitude: f64, seconds: f64, rate: u32) -> Waveform {
        let n = (seconds * rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    fn dominant_frequency(w: &Waveform) -> f64 {
        let n = w.len().next_power_of_two();
        let mut buf: Vec<Complex<f64>> = w
            .samples()
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (peak, _) = buf[..n / 2]
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.norm_sqr().total_cmp(&b.norm_sqr()))
            .unwrap();
        peak as f64 * w.sample_rate() as f64 / n as f64
    }

    #[test]
    fn identical_rates_are_bit_identical() {
        let w = sine(440.0, 0.7, 0.25, CANONICAL_RATE);
        let r = resample(&w, CANONICAL_RATE).unwrap();
        assert_eq!(r.samples(), w.samples());
    }

    #[test]
    fn one_second_at_48k_becomes_16000_samples() {
        let w = sine(440.0, 0.7, 1.0, 48_000);
        let r = resample(&w, 16_000).unwrap();
        assert!((r.len() as i64 - 16_000).abs() <= 1, "got {}", r.len());
        assert!((r.duration() - 1.0).abs() <= 1.0 / 16_000.0);
    }

    #[test]
    fn tone_survives_downsampling() {
        let w = sine(440.0, 0.7, 1.0, 48_000);
        let r = resample(&w, 16_000).unwrap();
        let f = dominant_frequency(&r);
        assert!((f - 440.0).abs() <= 2.0, "dominant bin at {f} Hz");
    }

    #[test]
    fn tone_survives_upsampling() {
        let w = sine(440.0, 0.7, 0.5, 16_000);
        let r = resample(&w, 48_000).unwrap();
        let f = dominant_frequency(&r);
        assert!((f - 440.0).abs() <= 3.0, "dominant bin at {f} Hz");
    }

    #[test]
    fn interior_amplitude_is_preserved() {
        let w = sine(440.0, 0.5, 1.0, 48_000);
        let r = resample(&w, 16_000).unwrap();
        let interior = &r.samples()[1000..r.len() - 1000];
        let peak = interior.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak - 0.5).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn empty_input_resamples_to_empty() {
        let w = Waveform::new(vec![], 48_000).unwrap();
        let r = resample(&w, 16_000).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.sample_rate(), 16_000);
    }
}
