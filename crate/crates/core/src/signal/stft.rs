//! Windowed STFT with one-sided spectra and weighted overlap-add synthesis.
//!
//! Frame `n` covers samples `[n * hop, n * hop + fft_size)` of the input after
//! `fft_size - hop` zeros have been prepended. Trailing zeros are appended
//! until every input sample is covered by the full set of overlapping frames,
//! which makes the analysis/synthesis pair an exact identity.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::TimeSignal;
use crate::error::{Error, Result};

/// Analysis/synthesis window pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Square-root periodic Hann on both sides.
    #[default]
    SqrtHann,
    /// Periodic Hann analysis, rectangular synthesis.
    Hann,
    /// Rectangular on both sides.
    Rectangular,
}

impl Window {
    /// Returns `(analysis, synthesis)` windows of length `n`.
    pub fn pair(self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let hann = |i: usize| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
        match self {
            Window::SqrtHann => {
                let w: Vec<f64> = (0..n).map(|i| hann(i).sqrt()).collect();
                (w.clone(), w)
            }
            Window::Hann => ((0..n).map(hann).collect(), vec![1.0; n]),
            Window::Rectangular => (vec![1.0; n], vec![1.0; n]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: Window,
}

impl Default for StftConfig {
    /// 256 ms frames at 16 kHz with 75% overlap.
    fn default() -> Self {
        Self {
            fft_size: 4096,
            hop: 1024,
            window: Window::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize, window: Window) -> Self {
        Self {
            fft_size,
            hop,
            window,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Leading zero padding.
    pub fn pad(&self) -> usize {
        self.fft_size - self.hop
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        (len + self.pad()).div_ceil(self.hop)
    }

    /// Checks the configuration and returns the overlap-add constant
    /// `sum_m analysis[t - m*hop] * synthesis[t - m*hop]`.
    pub fn validate(&self) -> Result<f64> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::Config(format!(
                "fft_size must be even and at least 2, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "hop must satisfy 0 < hop <= fft_size, got hop {} for fft_size {}",
                self.hop, self.fft_size
            )));
        }
        let (analysis, synthesis) = self.window.pair(self.fft_size);
        let mut ola = vec![0.0; self.hop];
        for (i, (a, s)) in analysis.iter().zip(&synthesis).enumerate() {
            ola[i % self.hop] += a * s;
        }
        let mean = ola.iter().sum::<f64>() / self.hop as f64;
        let worst = ola.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        if mean <= 0.0 || worst > 1e-9 * mean {
            return Err(Error::Config(format!(
                "{:?} window with fft_size {} and hop {} is not overlap-add \
                 constant (deviation {:.3e})",
                self.window, self.fft_size, self.hop, worst
            )));
        }
        Ok(mean)
    }
}

/// One-sided STFT frames, each holding `fft_size / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: Vec<Vec<Complex64>>,
    fft_size: usize,
    hop: usize,
}

impl Spectrogram {
    pub fn from_frames(frames: Vec<Vec<Complex64>>, fft_size: usize, hop: usize) -> Result<Self> {
        if hop == 0 || hop > fft_size {
            return Err(Error::Shape(format!(
                "hop {hop} invalid for fft_size {fft_size}"
            )));
        }
        let bins = fft_size / 2 + 1;
        for (n, frame) in frames.iter().enumerate() {
            if frame.len() != bins {
                return Err(Error::Shape(format!(
                    "frame {n} has {} bins, expected {bins}",
                    frame.len()
                )));
            }
            if frame.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Shape(format!("frame {n} has non-finite bins")));
            }
        }
        Ok(Self {
            frames,
            fft_size,
            hop,
        })
    }

    pub fn zeros(num_frames: usize, cfg: &StftConfig) -> Self {
        Self {
            frames: vec![vec![Complex64::default(); cfg.num_bins()]; num_frames],
            fft_size: cfg.fft_size,
            hop: cfg.hop,
        }
    }

    pub fn frames(&self) -> &[Vec<Complex64>] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.frames
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.frames[n]
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

/// Forward transform. Fails on an empty signal or an invalid configuration.
pub fn stft(signal: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::Argument("cannot transform an empty signal".into()));
    }
    let n = cfg.fft_size;
    let pad = cfg.pad();
    let frames = cfg.num_frames(signal.len());
    let (analysis, _) = cfg.window.pair(n);
    let plan = plans(n).forward;
    let x = signal.samples();

    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = (f * cfg.hop) as isize - pad as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let t = start + i as isize;
            let v = if t >= 0 && (t as usize) < x.len() {
                x[t as usize]
            } else {
                0.0
            };
            *b = Complex64::new(v * analysis[i], 0.0);
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        out.push(buf[..cfg.num_bins()].to_vec());
    }
    Ok(Spectrogram {
        frames: out,
        fft_size: n,
        hop: cfg.hop,
    })
}

/// Weighted overlap-add inverse, trimmed to `length` samples.
pub fn istft(
    spec: &Spectrogram,
    cfg: &StftConfig,
    length: usize,
    sample_rate: u32,
) -> Result<TimeSignal> {
    let ola = cfg.validate()?;
    if spec.fft_size != cfg.fft_size || spec.hop != cfg.hop {
        return Err(Error::Shape(format!(
            "spectrogram has fft_size {} / hop {}, config has {} / {}",
            spec.fft_size, spec.hop, cfg.fft_size, cfg.hop
        )));
    }
    let n = cfg.fft_size;
    let bins = cfg.num_bins();
    if let Some(bad) = spec.frames.iter().position(|f| f.len() != bins) {
        return Err(Error::Shape(format!(
            "frame {bad} has {} bins, expected {bins}",
            spec.frames[bad].len()
        )));
    }
    let (_, synthesis) = cfg.window.pair(n);
    let plan = plans(n).inverse;
    let pad = cfg.pad();
    let total = (spec.num_frames().saturating_sub(1)) * cfg.hop + n;
    let mut acc = vec![0.0; total.max(pad + length)];

    let mut buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let scale = 1.0 / (n as f64 * ola);
    for (f, frame) in spec.frames.iter().enumerate() {
        buf[..bins].copy_from_slice(frame);
        // DC and Nyquist of a real signal are real
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        let start = f * cfg.hop;
        for (i, v) in buf.iter().enumerate() {
            acc[start + i] += v.re * synthesis[i] * scale;
        }
    }
    TimeSignal::new(acc[pad..pad + length].to_vec(), sample_rate)
}
