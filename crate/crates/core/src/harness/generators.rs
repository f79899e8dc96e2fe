//! Deterministic test sources.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::signal::TimeSignal;

/// Gaussian white noise with unit variance times `gain`.
pub fn white_noise(len: usize, sample_rate: u32, gain: f64, seed: u64) -> TimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..len)
        .map(|_| gain * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    TimeSignal::new(v, sample_rate).expect("gaussian samples are finite")
}

/// Two-pole resonator `y[n] = g x[n] + a1 y[n-1] + a2 y[n-2]`.
#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
        let a2 = -r * r;
        let y = (1.0 - r) * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Speech-like signal: a pitch pulse train mixed with noise, shaped by three
/// formant resonators that move per syllable, under a syllabic envelope
/// with pauses between words. Peak-normalized to `peak`.
///
/// `f0_hz` sets the mean pitch (about 210 Hz for a female-like voice, 120 Hz
/// for a male-like one).
pub fn speech_like(len: usize, sample_rate: u32, f0_hz: f64, peak: f64, seed: u64) -> TimeSignal {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut formants = [Resonator::default(); 3];

    let mut t = 0usize;
    let mut phase = 0.0;
    while t < len {
        // a word of 1..=4 syllables followed by a pause
        let syllables = rng.random_range(1..=4);
        for _ in 0..syllables {
            let dur = (rng.random_range(0.12..0.28) * fs) as usize;
            let target = [
                rng.random_range(300.0..900.0),
                rng.random_range(900.0..2400.0),
                rng.random_range(2400.0..3500.0),
            ];
            let voiced = rng.random_bool(0.8);
            let amp = rng.random_range(0.4..1.0);
            let pitch = f0_hz * rng.random_range(0.85..1.15);
            for i in 0..dur {
                if t >= len {
                    break;
                }
                let u = i as f64 / dur as f64;
                let env = amp * (PI * u).sin().powi(2);
                let f0 = pitch * (1.0 + 0.08 * (2.0 * PI * 3.0 * t as f64 / fs).sin());
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                let noise: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let exc = if voiced {
                    8.0 * pulse + 0.05 * noise
                } else {
                    0.5 * noise
                };
                let mut y = 0.0;
                for (res, (f, bw)) in formants
                    .iter_mut()
                    .zip(target.iter().zip([80.0, 120.0, 180.0]))
                {
                    y += res.step(exc, *f, bw, fs);
                }
                out[t] = env * y;
                t += 1;
            }
        }
        t += (rng.random_range(0.05..0.35) * fs) as usize;
    }

    let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        let g = peak / max;
        out.iter_mut().for_each(|v| *v *= g);
    }
    TimeSignal::new(out, sample_rate).expect("resonator output is finite")
}
