//! Audio I/O and standardization.
//!
//! Every downstream stage works on mono, fixed-rate, fixed-length waveforms;
//! this module reads RIFF/WAVE files (16-bit PCM or 32-bit IEEE float, one
//! or two channels), writes 16-bit PCM, and resamples/pads/truncates clips
//! to the canonical format.

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Canonical sample rate used by the pipeline (Hz).
pub const CANONICAL_RATE: u32 = 22_050;
/// Canonical clip duration used by the pipeline (seconds).
pub const CANONICAL_SECONDS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    Missing(PathBuf),
    #[error("malformed RIFF/WAVE data in {path}: {detail}")]
    MalformedRiff { path: PathBuf, detail: String },
    #[error("unsupported WAV encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("sample {value} at index {index} outside [-1, 1]; clip before writing")]
    OutOfRange { index: usize, value: f64 },
    #[error("waveform has no samples")]
    Empty,
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("target length rounds to zero samples")]
    DegenerateTarget,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// A mono sample sequence with its sample rate. Samples are finite; the
/// I/O and mixing operations keep them within [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if sample_rate == 0 {
            return Err(AudioError::ZeroRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
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

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        let e: f64 = self.samples.iter().map(|s| s * s).sum();
        (e / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Read a WAV file into a mono waveform scaled to [-1, 1].
///
/// Stereo input collapses to the per-frame channel mean; the file's sample
/// rate is preserved. 16-bit PCM scales by 1/32768; float samples are
/// clamped to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::Missing(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("{} channels (expected 1 or 2)", spec.channels),
        });
    }
    let mut samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0).map_err(|e| map_hound(path, e)))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64).map_err(|e| map_hound(path, e)))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)"),
            })
        }
    };
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    if spec.channels == 2 {
        samples = samples
            .chunks_exact(2)
            .map(|fr| (fr[0] + fr[1]) / 2.0)
            .collect();
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Write a waveform as mono 16-bit PCM at its stored rate.
///
/// Samples must be finite and within [-1, 1]; round-trip error is at most
/// one quantization step (1/32768) per sample.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let path = path.as_ref();
    for (i, &s) in w.samples.iter().enumerate() {
        if !s.is_finite() {
            return Err(AudioError::NonFinite(i));
        }
        if !(-1.0..=1.0).contains(&s) {
            return Err(AudioError::OutOfRange { index: i, value: s });
        }
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Resample (linear interpolation) and pad/truncate to exactly
/// `round(target_rate * target_seconds)` samples.
///
/// Idempotent: re-standardizing an already standardized clip is bit-exact.
pub fn standardize(
    w: &Waveform,
    target_rate: u32,
    target_seconds: f64,
) -> Result<Waveform, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    let target_len = (target_rate as f64 * target_seconds).round() as usize;
    if target_len == 0 {
        return Err(AudioError::DegenerateTarget);
    }
    if w.sample_rate == target_rate {
        let mut samples = w.samples.clone();
        samples.resize(target_len, 0.0);
        return Waveform::new(samples, target_rate);
    }
    // Treat the input as zero-extended past its end so padding and
    // interpolation share one convention.
    let step = w.sample_rate as f64 / target_rate as f64;
    let at = |i: usize| -> f64 {
        if i < w.samples.len() {
            w.samples[i]
        } else {
            0.0
        }
    };
    let samples = (0..target_len)
        .map(|n| {
            let pos = n as f64 * step;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            at(i0) * (1.0 - frac) + at(i0 + 1) * frac
        })
        .collect();
    Waveform::new(samples, target_rate)
}

/// Linear-interpolation resample keeping the natural duration.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    if w.sample_rate == target_rate {
        return Ok(w.clone());
    }
    let out_len = ((w.len() as u64 * target_rate as u64) / w.sample_rate as u64).max(1) as usize;
    let step = w.sample_rate as f64 / target_rate as f64;
    let at = |i: usize| -> f64 {
        if i < w.samples.len() {
            w.samples[i]
        } else {
            0.0
        }
    };
    let samples = (0..out_len)
        .map(|n| {
            let pos = n as f64 * step;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            at(i0) * (1.0 - frac) + at(i0 + 1) * frac
        })
        .collect();
    Waveform::new(samples, target_rate)
}

fn map_hound(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::FormatError(detail) => AudioError::MalformedRiff {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        },
        other => AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("soundstyle-audio-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn silence_round_trips_exactly() {
        let w = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        let p = tmp("silence.wav");
        write_wav(&p, &w).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.sample_rate(), 8000);
        assert_eq!(r.len(), 8000);
        assert!(r.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_extremes_scale_by_32768() {
        let p = tmp("extremes.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(32767i16).unwrap();
        wr.write_sample(-32768i16).unwrap();
        wr.finalize().unwrap();

        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples()[0], 32767.0 / 32768.0);
        assert_eq!(w.samples()[1], -1.0);
    }

    #[test]
    fn stereo_collapses_to_channel_mean() {
        let p = tmp("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 22050,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..10 {
            wr.write_sample(1.0f32).unwrap();
            wr.write_sample(0.0f32).unwrap();
        }
        wr.finalize().unwrap();

        let w = read_wav(&p).unwrap();
        assert_eq!(w.len(), 10);
        assert!(w.samples().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn ramp_round_trip_stays_within_one_step() {
        let n = 100;
        let samples: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        let w = Waveform::new(samples.clone(), 22050).unwrap();
        let p = tmp("ramp.wav");
        write_wav(&p, &w).unwrap();
        let r = read_wav(&p).unwrap();

        // Oracle: explicit quantize/dequantize.
        for (i, (&orig, &back)) in samples.iter().zip(r.samples()).enumerate() {
            let q = (orig * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0;
            assert_eq!(back, q, "sample {i} differs from quantization oracle");
            assert!((back - orig).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn out_of_range_sample_is_rejected() {
        let w = Waveform::new(vec![0.0, 2.0], 8000).unwrap();
        let err = write_wav(tmp("bad.wav"), &w).unwrap_err();
        assert!(matches!(err, AudioError::OutOfRange { index: 1, .. }));
    }

    #[test]
    fn non_finite_is_rejected_at_construction() {
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], 8000),
            Err(AudioError::NonFinite(1))
        ));
    }

    #[test]
    fn missing_file_and_garbage_file_errors() {
        assert!(matches!(
            read_wav("/nonexistent/nope.wav"),
            Err(AudioError::Missing(_))
        ));
        let p = tmp("garbage.wav");
        std::fs::write(&p, b"this is not a RIFF file at all").unwrap();
        assert!(matches!(
            read_wav(&p),
            Err(AudioError::MalformedRiff { .. }) | Err(AudioError::Io { .. })
        ));
    }

    #[test]
    fn standardize_identity_when_already_canonical() {
        let samples: Vec<f64> = (0..88200).map(|i| ((i % 200) as f64 / 200.0) - 0.5).collect();
        let w = Waveform::new(samples.clone(), 22050).unwrap();
        let s = standardize(&w, 22050, 4.0).unwrap();
        assert_eq!(s.samples(), &samples[..]);
    }

    #[test]
    fn standardize_pads_short_clips_with_zeros() {
        let w = Waveform::new(vec![0.25; 2 * 22050], 22050).unwrap();
        let s = standardize(&w, 22050, 4.0).unwrap();
        assert_eq!(s.len(), 88200);
        assert!(s.samples()[..2 * 22050].iter().all(|&x| x == 0.25));
        assert!(s.samples()[2 * 22050..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resampling_preserves_dominant_frequency() {
        // Oracle: DFT peak location on both signals.
        let rate_in = 44100u32;
        let freq = 440.0;
        let samples: Vec<f64> = (0..rate_in as usize)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate_in as f64).sin())
            .collect();
        let w = Waveform::new(samples, rate_in).unwrap();
        let s = standardize(&w, 22050, 1.0).unwrap();
        assert_eq!(s.len(), 22050);

        let peak = |w: &Waveform| -> f64 {
            let n = 8192usize;
            let mut planner = rustfft::FftPlanner::<f64>::new();
            let fft = planner.plan_fft_forward(n);
            let mut buf: Vec<rustfft::num_complex::Complex64> = w.samples()[..n]
                .iter()
                .map(|&s| rustfft::num_complex::Complex64::new(s, 0.0))
                .collect();
            fft.process(&mut buf);
            let k = (1..n / 2)
                .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
                .unwrap();
            k as f64 * w.sample_rate() as f64 / n as f64
        };
        let f_in = peak(&w);
        let f_out = peak(&s);
        assert!((f_in - 440.0).abs() < 6.0, "input peak {f_in}");
        assert!((f_out - 440.0).abs() < 6.0, "resampled peak {f_out}");
    }

    #[test]
    fn standardize_is_idempotent_bit_exactly() {
        let samples: Vec<f64> = (0..30000)
            .map(|i| ((i as f64 * 0.01).sin() * 0.8).clamp(-1.0, 1.0))
            .collect();
        let w = Waveform::new(samples, 44100).unwrap();
        let once = standardize(&w, 22050, 1.3).unwrap();
        let twice = standardize(&once, 22050, 1.3).unwrap();
        assert_eq!(once.samples(), twice.samples());
    }
}
