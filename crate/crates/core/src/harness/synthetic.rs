//! Mixtures built directly in the STFT domain, where the per-bin echo model
//! `Y = S + sum_i H_i X_i` holds exactly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nonlinear::expand_basis;
use crate::signal::{ensure_same_rate, istft, stft, Spectrogram, StftConfig, TimeSignal};

#[derive(Debug, Clone)]
pub struct SpectralMixture {
    pub mic: Spectrogram,
    /// Spectra of the basis signals of the far end.
    pub refs: Vec<Spectrogram>,
    /// Time-domain echo, the ISTFT of `sum_i H_i X_i`.
    pub echo: TimeSignal,
    /// Time-domain near end as present in the microphone.
    pub near_end: TimeSignal,
    pub near_end_gain: f64,
}

/// Random stationary echo path: per bin, `H_i = weights[i] * (a + jb)` with
/// `a, b` uniform in `[-1, 1)`.
pub fn random_path(num_bins: usize, weights: &[f64], seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_bins)
        .map(|_| {
            weights
                .iter()
                .map(|w| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * *w
                })
                .collect()
        })
        .collect()
}

/// Builds the microphone spectra from a per-bin path over the `p` basis
/// signals of `far_end` (`p = path[k].len()`). The near end is scaled so the
/// time-domain echo-to-near-end ratio is `esr_db`.
pub fn spectral_mixture(
    far_end: &TimeSignal,
    near_end: &TimeSignal,
    path: &[Vec<Complex64>],
    cfg: &StftConfig,
    esr_db: f64,
) -> Result<SpectralMixture> {
    ensure_same_rate(far_end, near_end, "spectral mixture")?;
    if far_end.len() != near_end.len() {
        return Err(Error::Argument(
            "far and near end must have equal lengths".into(),
        ));
    }
    if path.len() != cfg.num_bins() {
        return Err(Error::Shape(format!(
            "path has {} bins, expected {}",
            path.len(),
            cfg.num_bins()
        )));
    }
    let p = path.first().map_or(0, |h| h.len());
    if p == 0 || path.iter().any(|h| h.len() != p) {
        return Err(Error::Shape(
            "path must have the same non-zero order in every bin".into(),
        ));
    }
    let (len, fs) = (far_end.len(), far_end.sample_rate());
    let basis = expand_basis(far_end, p)?;
    let refs = basis
        .signals()
        .iter()
        .map(|b| stft(b, cfg))
        .collect::<Result<Vec<_>>>()?;
    let sspec = stft(near_end, cfg)?;

    let mut dspec = sspec.clone();
    for (n, frame) in dspec.frames_mut().iter_mut().enumerate() {
        for (k, v) in frame.iter_mut().enumerate() {
            *v = path[k]
                .iter()
                .zip(&refs)
                .map(|(h, r)| h * r.frame(n)[k])
                .sum();
        }
    }
    let echo = istft(&dspec, cfg, len, fs)?;
    let ps = near_end.power();
    if ps == 0.0 || echo.power() == 0.0 {
        return Err(Error::Argument(
            "an ESR needs a non-silent echo and near end".into(),
        ));
    }
    let gain = (echo.power() / (ps * 10f64.powf(esr_db / 10.0))).sqrt();
    let mut mic = dspec;
    for (m, s) in mic.frames_mut().iter_mut().zip(sspec.frames()) {
        for (a, b) in m.iter_mut().zip(s) {
            *a += b * gain;
        }
    }
    Ok(SpectralMixture {
        mic,
        refs,
        echo,
        near_end: near_end.scaled(gain),
        near_end_gain: gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generators::white_noise;

    #[test]
    fn mixture_is_exact_per_bin() {
        let cfg = StftConfig::new(64, 16, Default::default());
        let x = white_noise(2000, 16000, 0.3, 1);
        let s = white_noise(2000, 16000, 0.3, 2);
        let path = random_path(cfg.num_bins(), &[1.0, 0.5], 3);
        let m = spectral_mixture(&x, &s, &path, &cfg, 0.0).unwrap();
        let sspec = stft(&s, &cfg).unwrap();
        for n in 0..m.mic.num_frames() {
            for k in 0..cfg.num_bins() {
                let want = sspec.frame(n)[k] * m.near_end_gain
                    + path[k][0] * m.refs[0].frame(n)[k]
                    + path[k][1] * m.refs[1].frame(n)[k];
                assert!((m.mic.frame(n)[k] - want).norm() <= 1e-12 * want.norm().max(1.0));
            }
        }
        assert!((10.0 * (m.echo.power() / m.near_end.power()).log10()).abs() < 1e-9);
        assert!(spectral_mixture(&x, &s, &path[1..], &cfg, 0.0).is_err());
        assert!(spectral_mixture(&x, &TimeSignal::zeros(2000, 16000), &path, &cfg, 0.0).is_err());
    }
}
