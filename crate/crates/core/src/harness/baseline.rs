//! Frequency-domain multichannel NLMS comparator.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sbss::{analyze_inputs, SbssParams};
use crate::signal::{istft, Spectrogram, StftConfig, TimeSignal};

pub const DEFAULT_STEP: f64 = 0.5;
/// Regularizer relative to the running mean reference power per bin. Keeps
/// the step bounded through far-end pauses.
pub const NLMS_REG: f64 = 1e-2;
/// Absolute floor on the regularizer.
pub const NLMS_EPS: f64 = 1e-20;

/// Per-bin NLMS on the `p` basis spectra: `E = Y - sum_i H_i X_i`, with
/// `H_i += step * E conj(X_i) / (sum_i |X_i|^2 + eps)` and `eps` tracking
/// the average reference power.
pub fn baseline_fdaf(
    far_end: &TimeSignal,
    microphone: &TimeSignal,
    order: usize,
    stft: StftConfig,
    step: f64,
) -> Result<TimeSignal> {
    let params = SbssParams {
        order,
        stft,
        ..Default::default()
    };
    let (mic, refs) = analyze_inputs(far_end, microphone, &params)?;
    let out = nlms_spectra(&mic, &refs, step)?;
    istft(&out, &stft, microphone.len(), microphone.sample_rate())
}

/// The NLMS recursion on precomputed spectra; returns `E` per frame, each
/// computed before that frame's update.
pub fn nlms_spectra(mic: &Spectrogram, refs: &[Spectrogram], step: f64) -> Result<Spectrogram> {
    if !(step.is_finite() && step >= 0.0) {
        return Err(Error::Config(format!(
            "NLMS step must be finite and non-negative, got {step}"
        )));
    }
    if refs.is_empty() {
        return Err(Error::Config("NLMS needs at least one reference".into()));
    }
    for r in refs {
        if r.num_frames() != mic.num_frames() || r.num_bins() != mic.num_bins() {
            return Err(Error::Shape(format!(
                "reference is {}x{} but microphone is {}x{}",
                r.num_frames(),
                r.num_bins(),
                mic.num_frames(),
                mic.num_bins()
            )));
        }
    }
    let order = refs.len();
    let bins = mic.num_bins();
    let mut h = vec![Complex64::default(); bins * order];
    let mut out = mic.clone();
    // running mean of the per-bin reference power, for the regularizer
    let mut mean_power = 0.0;
    for (n, frame) in out.frames_mut().iter_mut().enumerate() {
        let frame_power = refs
            .iter()
            .flat_map(|r| r.frame(n))
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            / bins as f64;
        mean_power += (frame_power - mean_power) / (n + 1) as f64;
        let eps = NLMS_REG * mean_power + NLMS_EPS;
        for (k, e) in frame.iter_mut().enumerate() {
            let hk = &mut h[k * order..(k + 1) * order];
            let x = || refs.iter().map(|r| r.frame(n)[k]);
            *e -= hk.iter().zip(x()).map(|(a, b)| a * b).sum::<Complex64>();
            let power: f64 = x().map(|z| z.norm_sqr()).sum();
            let g = *e * (step / (power + eps));
            for (a, b) in hk.iter_mut().zip(x()) {
                *a += g * b.conj();
            }
        }
    }
    Ok(out)
}
