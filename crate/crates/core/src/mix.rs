//! Waveform-domain mixing baseline: overlay the style clip onto the content
//! clip at equal loudness.

use thiserror::Error;

use crate::audio::Waveform;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("length mismatch: content {content} vs style {style} samples; standardize first")]
    LengthMismatch { content: usize, style: usize },
    #[error("sample rate mismatch: content {content} Hz vs style {style} Hz")]
    RateMismatch { content: u32, style: u32 },
}

/// Mixing result; `both_silent` flags the degenerate case where neither
/// input carried any signal (the output is silence).
#[derive(Clone, Debug)]
pub struct MixOutcome {
    pub waveform: Waveform,
    pub both_silent: bool,
}

/// Peak level the mixed output is capped to.
pub const MIX_PEAK: f64 = 0.95;

/// Overlay `style` on top of `content`.
///
/// Both inputs are scaled to equal RMS (the louder one's), the style is
/// further scaled by `style_gain_db`, the two are summed, and the sum is
/// peak-normalized to 0.95 if it exceeds that. Pure function of its inputs.
pub fn mix(content: &Waveform, style: &Waveform, style_gain_db: f64) -> Result<MixOutcome, MixError> {
    if content.sample_rate() != style.sample_rate() {
        return Err(MixError::RateMismatch {
            content: content.sample_rate(),
            style: style.sample_rate(),
        });
    }
    if content.len() != style.len() {
        return Err(MixError::LengthMismatch {
            content: content.len(),
            style: style.len(),
        });
    }
    let rms_c = content.rms();
    let rms_s = style.rms();
    if rms_c == 0.0 && rms_s == 0.0 {
        return Ok(MixOutcome {
            waveform: Waveform::new(vec![0.0; content.len()], content.sample_rate()).unwrap(),
            both_silent: true,
        });
    }
    let target = rms_c.max(rms_s);
    let gc = if rms_c > 0.0 { target / rms_c } else { 0.0 };
    let gs = if rms_s > 0.0 { target / rms_s } else { 0.0 };
    let gain = 10f64.powf(style_gain_db / 20.0);

    let mut samples: Vec<f64> = content
        .samples()
        .iter()
        .zip(style.samples())
        .map(|(&c, &s)| c * gc + s * gs * gain)
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > MIX_PEAK {
        let scale = MIX_PEAK / peak;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
    Ok(MixOutcome {
        waveform: Waveform::new(samples, content.sample_rate()).unwrap(),
        both_silent: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 22050).unwrap()
    }

    fn sine(freq: f64, n: usize, amp: f64) -> Waveform {
        wave(
            (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin())
                .collect(),
        )
    }

    #[test]
    fn silent_style_returns_content_unchanged() {
        let c = sine(440.0, 8192, 0.4);
        let s = wave(vec![0.0; 8192]);
        let out = mix(&c, &s, 0.0).unwrap();
        assert!(!out.both_silent);
        // target RMS equals the content's own RMS, so content passes through.
        for (a, b) in out.waveform.samples().iter().zip(c.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_sum_proportionally() {
        let c = sine(300.0, 4096, 0.3);
        let out = mix(&c, &c, 0.0).unwrap();
        // Sum of two equal signals, then peak-capped; output stays
        // proportional to the input.
        let peak_in = c.peak();
        let expected_scale = if 2.0 * peak_in > MIX_PEAK {
            MIX_PEAK / peak_in / 2.0
        } else {
            1.0
        } * 2.0;
        for (o, i) in out.waveform.samples().iter().zip(c.samples()) {
            assert!((o - i * expected_scale).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_equal_rms_signals_add_energy() {
        // Two orthogonal sines at equal RMS r mix to RMS r*sqrt(2)
        // (amplitudes small enough that the 0.95 peak cap stays inactive).
        let n = 22050;
        let a = sine(430.0, n, 0.2);
        let b = sine(860.0, n, 0.2);
        let out = mix(&a, &b, 0.0).unwrap();
        assert!(out.waveform.peak() <= MIX_PEAK + 1e-9);
        let r = a.rms();
        let mixed = out.waveform.rms();
        assert!(
            (mixed - r * 2f64.sqrt()).abs() / (r * 2f64.sqrt()) < 0.01,
            "mixed rms {mixed}, expected {}",
            r * 2f64.sqrt()
        );
    }

    #[test]
    fn swap_symmetric_at_zero_gain() {
        let a = sine(500.0, 4096, 0.5);
        let b = sine(1250.0, 4096, 0.1);
        let ab = mix(&a, &b, 0.0).unwrap();
        let ba = mix(&b, &a, 0.0).unwrap();
        assert_eq!(ab.waveform.samples(), ba.waveform.samples());
    }

    #[test]
    fn peak_never_exceeds_cap() {
        let a = sine(440.0, 4096, 0.9);
        let b = sine(441.0, 4096, 0.9);
        let out = mix(&a, &b, 6.0).unwrap();
        assert!(out.waveform.peak() <= MIX_PEAK + 1e-9);
    }

    #[test]
    fn both_silent_inputs_flagged() {
        let z = wave(vec![0.0; 128]);
        let out = mix(&z, &z, 0.0).unwrap();
        assert!(out.both_silent);
        assert!(out.waveform.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let a = wave(vec![0.1; 100]);
        let b = wave(vec![0.1; 101]);
        assert!(matches!(mix(&a, &b, 0.0), Err(MixError::LengthMismatch { .. })));
        let c = Waveform::new(vec![0.1; 100], 44100).unwrap();
        assert!(matches!(mix(&a, &c, 0.0), Err(MixError::RateMismatch { .. })));
    }
}
