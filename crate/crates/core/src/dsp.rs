//! STFT analysis/synthesis, log-magnitude spectrograms, fixed-grid resizing
//! for network inputs, and Griffin-Lim phase reconstruction.
//!
//! The inverse transform is the least-squares overlap-add inverse (synthesis
//! window equal to the analysis window, normalized by the accumulated squared
//! window), which is what makes the Griffin-Lim consistency trace
//! non-increasing.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

use crate::audio::Waveform;
use crate::rng::seeded_rng;
use crate::tensor::Tensor;
use rand::Rng;

/// Floor added before taking logs of magnitudes.
pub const LOG_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("window size {0} is not a power of two")]
    WindowNotPow2(usize),
    #[error("hop {hop} invalid for window {window} (need 0 < hop <= window)")]
    BadHop { hop: usize, window: usize },
    #[error("window/hop combination violates overlap-add invertibility")]
    ColaViolation,
    #[error("waveform of {len} samples is shorter than one window ({window})")]
    TooShort { len: usize, window: usize },
    #[error("grid is degenerate ({rows} rows x {cols} cols); need at least 2x2")]
    DegenerateGrid { rows: usize, cols: usize },
    #[error("resize target {rows}x{cols} invalid; need at least 2x2")]
    BadResizeTarget { rows: usize, cols: usize },
    #[error("expected a {expected:?}-domain grid")]
    WrongDomain { expected: Domain },
    #[error("iterations must be >= 1")]
    NoIterations,
}

/// Window shapes available to the STFT. Only Hann is needed here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

/// STFT framing parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftParams {
    pub window_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    /// 1024-sample Hann window with 75% overlap.
    fn default() -> Self {
        StftParams {
            window_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn new(window_size: usize, hop: usize) -> Result<Self, DspError> {
        let p = StftParams {
            window_size,
            hop,
            window: WindowKind::Hann,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !self.window_size.is_power_of_two() {
            return Err(DspError::WindowNotPow2(self.window_size));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(DspError::BadHop {
                hop: self.hop,
                window: self.window_size,
            });
        }
        // NOLA: the accumulated squared window must be bounded away from
        // zero at every interior phase, otherwise overlap-add cannot invert.
        let w = self.window_samples();
        for phase in 0..self.hop {
            let mut acc = 0.0;
            let mut n = phase;
            while n < self.window_size {
                acc += w[n] * w[n];
                n += self.hop;
            }
            if acc <= 1e-8 {
                return Err(DspError::ColaViolation);
            }
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Periodic Hann window.
    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.window_size;
        (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
            .collect()
    }

    pub fn n_frames(&self, signal_len: usize) -> Result<usize, DspError> {
        if signal_len < self.window_size {
            return Err(DspError::TooShort {
                len: signal_len,
                window: self.window_size,
            });
        }
        Ok((signal_len - self.window_size) / self.hop + 1)
    }
}

/// Complex STFT frames: `n_bins x n_frames`, non-negative frequencies only.
/// Stored frame-major (each frame's bins contiguous).
#[derive(Clone, Debug)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }
}

/// Whether grid values are linear magnitudes or log magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Linear,
    Log,
}

/// An `n_bins x n_frames` magnitude matrix. Stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeGrid {
    data: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub domain: Domain,
}

impl MagnitudeGrid {
    pub fn new(data: Vec<f64>, n_bins: usize, n_frames: usize, domain: Domain) -> Self {
        assert_eq!(data.len(), n_bins * n_frames);
        MagnitudeGrid {
            data,
            n_bins,
            n_frames,
            domain,
        }
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.n_bins + bin]
    }

    pub fn set(&mut self, bin: usize, frame: usize, v: f64) {
        self.data[frame * self.n_bins + bin] = v;
    }

    /// Frame-major backing storage (frame `f` occupies `[f*n_bins, (f+1)*n_bins)`).
    pub fn frame_major(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_major_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Frobenius distance between two grids of equal shape.
    pub fn frobenius_distance(&self, other: &MagnitudeGrid) -> f64 {
        assert_eq!(self.n_bins, other.n_bins);
        assert_eq!(self.n_frames, other.n_frames);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Interpret a log-domain grid back as linear magnitudes.
    pub fn to_linear(&self) -> MagnitudeGrid {
        match self.domain {
            Domain::Linear => self.clone(),
            Domain::Log => MagnitudeGrid {
                data: self.data.iter().map(|v| (v.exp() - LOG_EPS).max(0.0)).collect(),
                n_bins: self.n_bins,
                n_frames: self.n_frames,
                domain: Domain::Linear,
            },
        }
    }
}

/// Short-time Fourier transform. Frame `t` is the windowed DFT of samples
/// `[t*hop, t*hop + window)`; only non-negative frequency bins are kept.
pub fn stft(w: &Waveform, p: &StftParams) -> Result<ComplexSpectrogram, DspError> {
    p.validate()?;
    let n_frames = p.n_frames(w.len())?;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(p.window_size);
    Ok(stft_with_plan(w.samples(), p, n_frames, &fft, w.sample_rate()))
}

fn stft_with_plan(
    samples: &[f64],
    p: &StftParams,
    n_frames: usize,
    fft: &Arc<dyn Fft<f64>>,
    sample_rate: u32,
) -> ComplexSpectrogram {
    let n = p.window_size;
    let n_bins = p.n_bins();
    let window = p.window_samples();
    let mut data = vec![Complex64::new(0.0, 0.0); n_bins * n_frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..n_frames {
        let start = t * p.hop;
        for i in 0..n {
            buf[i] = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        data[t * n_bins..(t + 1) * n_bins].copy_from_slice(&buf[..n_bins]);
    }
    ComplexSpectrogram {
        data,
        n_bins,
        n_frames,
        params: *p,
        sample_rate,
    }
}

/// Least-squares overlap-add inverse of [`stft`].
///
/// Interior samples (at least one window from each edge) of
/// `istft(stft(w))` match `w` to well below 1e-6.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform, DspError> {
    s.params.validate()?;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(s.params.window_size);
    Ok(istft_with_plan(s, &ifft))
}

fn istft_with_plan(s: &ComplexSpectrogram, ifft: &Arc<dyn Fft<f64>>) -> Waveform {
    let p = &s.params;
    let n = p.window_size;
    let n_bins = s.n_bins;
    let window = p.window_samples();
    let out_len = (s.n_frames - 1) * p.hop + n;
    let mut acc = vec![0.0f64; out_len];
    let mut weight = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for t in 0..s.n_frames {
        let frame = s.frame(t);
        buf[..n_bins].copy_from_slice(frame);
        // Conjugate symmetry for the negative frequencies of a real signal.
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        ifft.process(&mut buf);
        let start = t * p.hop;
        for i in 0..n {
            let y = buf[i].re * scale;
            acc[start + i] += window[i] * y;
            weight[start + i] += window[i] * window[i];
        }
    }
    let samples: Vec<f64> = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| if w > 1e-12 { a / w } else { 0.0 })
        .collect();
    Waveform::new(samples, s.sample_rate).expect("istft output is finite and non-empty")
}

/// Natural log of magnitudes with an additive floor: `ln(|X| + 1e-5)`.
pub fn log_magnitude(s: &ComplexSpectrogram) -> MagnitudeGrid {
    MagnitudeGrid {
        data: s.data.iter().map(|c| (c.norm() + LOG_EPS).ln()).collect(),
        n_bins: s.n_bins,
        n_frames: s.n_frames,
        domain: Domain::Log,
    }
}

/// Bilinear interpolation of `values` (rows x cols, row-major) onto
/// `out_rows x out_cols`, corner-aligned.
fn resize_bilinear(
    values: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; out_rows * out_cols];
    let r_step = (rows - 1) as f64 / (out_rows - 1) as f64;
    let c_step = (cols - 1) as f64 / (out_cols - 1) as f64;
    for i in 0..out_rows {
        let rf = i as f64 * r_step;
        let r0 = (rf.floor() as usize).min(rows - 1);
        let r1 = (r0 + 1).min(rows - 1);
        let fr = rf - r0 as f64;
        for j in 0..out_cols {
            let cf = j as f64 * c_step;
            let c0 = (cf.floor() as usize).min(cols - 1);
            let c1 = (c0 + 1).min(cols - 1);
            let fc = cf - c0 as f64;
            let v00 = values[r0 * cols + c0];
            let v01 = values[r0 * cols + c1];
            let v10 = values[r1 * cols + c0];
            let v11 = values[r1 * cols + c1];
            // Incremental form keeps constant inputs bit-exactly constant.
            let top = v00 + fc * (v01 - v00);
            let bottom = v10 + fc * (v11 - v10);
            out[i * out_cols + j] = top + fr * (bottom - top);
        }
    }
    out
}

/// Resize a grid to `rows x cols` by bilinear interpolation, then min-max
/// normalize to [0, 1]. A constant grid maps to all zeros.
pub fn resize_grid(g: &MagnitudeGrid, rows: usize, cols: usize) -> Result<Tensor, DspError> {
    if rows < 2 || cols < 2 {
        return Err(DspError::BadResizeTarget { rows, cols });
    }
    if g.n_bins < 2 || g.n_frames < 2 {
        return Err(DspError::DegenerateGrid {
            rows: g.n_bins,
            cols: g.n_frames,
        });
    }
    // Row-major bins x frames view of the frame-major storage.
    let mut rowmajor = vec![0.0; g.n_bins * g.n_frames];
    for b in 0..g.n_bins {
        for f in 0..g.n_frames {
            rowmajor[b * g.n_frames + f] = g.at(b, f);
        }
    }
    let mut out = resize_bilinear(&rowmajor, g.n_bins, g.n_frames, rows, cols);
    min_max_normalize(&mut out);
    Ok(Tensor::new(vec![rows, cols], out))
}

/// In-place min-max normalization to [0, 1]; a constant slice becomes zeros.
pub(crate) fn min_max_normalize(values: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    }
}

/// Griffin-Lim output: the reconstructed waveform plus the per-iteration
/// relative consistency `||stft(x_i)| - m||_F / ||m||_F`.
#[derive(Clone, Debug)]
pub struct GriffinLimResult {
    pub waveform: Waveform,
    pub consistency: Vec<f64>,
    /// Set when the requested magnitude was identically zero.
    pub silent: bool,
}

/// Reconstruct a waveform whose STFT magnitude approximates `m`.
///
/// Starts from seeded uniform random phase and alternates
/// `x <- istft(m * phase(stft(x)))`. The consistency trace is non-increasing
/// (Griffin-Lim descent property of the least-squares inverse). Output is
/// peak-normalized to 0.95 if reconstruction exceeds full scale.
pub fn griffin_lim(
    m: &MagnitudeGrid,
    p: &StftParams,
    iterations: usize,
    seed: u64,
    sample_rate: u32,
) -> Result<GriffinLimResult, DspError> {
    if m.domain != Domain::Linear {
        return Err(DspError::WrongDomain {
            expected: Domain::Linear,
        });
    }
    if iterations == 0 {
        return Err(DspError::NoIterations);
    }
    p.validate()?;
    let n_bins = m.n_bins;
    assert_eq!(n_bins, p.n_bins(), "grid bins do not match stft params");
    let mag = m.frame_major();
    let norm_m = mag.iter().map(|v| v * v).sum::<f64>().sqrt();
    let out_len = (m.n_frames - 1) * p.hop + p.window_size;
    if norm_m == 0.0 {
        return Ok(GriffinLimResult {
            waveform: Waveform::new(vec![0.0; out_len], sample_rate).unwrap(),
            consistency: vec![0.0; iterations],
            silent: true,
        });
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(p.window_size);
    let ifft = planner.plan_fft_inverse(p.window_size);

    // Initial estimate: target magnitudes with uniform random phase. DC and
    // Nyquist stay real so the spectrum is that of a real signal.
    let mut rng = seeded_rng(seed);
    let mut spec = ComplexSpectrogram {
        data: vec![Complex64::new(0.0, 0.0); n_bins * m.n_frames],
        n_bins,
        n_frames: m.n_frames,
        params: *p,
        sample_rate,
    };
    for f in 0..m.n_frames {
        for b in 0..n_bins {
            let phase = if b == 0 || b == n_bins - 1 {
                0.0
            } else {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            };
            spec.data[f * n_bins + b] = Complex64::from_polar(mag[f * n_bins + b], phase);
        }
    }

    let mut consistency = Vec::with_capacity(iterations);
    let mut wave = istft_with_plan(&spec, &ifft);
    for _ in 0..iterations {
        let rebuilt = stft_with_plan(wave.samples(), p, m.n_frames, &fft, sample_rate);
        let mut err = 0.0;
        for (i, c) in rebuilt.data.iter().enumerate() {
            let d = c.norm() - mag[i];
            err += d * d;
        }
        consistency.push(err.sqrt() / norm_m);
        // Keep the rebuilt phase, restore the target magnitude.
        for (i, c) in rebuilt.data.iter().enumerate() {
            let r = c.norm();
            spec.data[i] = if r > 0.0 {
                *c * (mag[i] / r)
            } else {
                Complex64::new(mag[i], 0.0)
            };
        }
        wave = istft_with_plan(&spec, &ifft);
    }

    let peak = wave.peak();
    let samples = if peak > 1.0 {
        wave.samples().iter().map(|s| s * 0.95 / peak).collect()
    } else {
        wave.samples().to_vec()
    };
    Ok(GriffinLimResult {
        waveform: Waveform::new(samples, sample_rate).unwrap(),
        consistency,
        silent: false,
    })
}
