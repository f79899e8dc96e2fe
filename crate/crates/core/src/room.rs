//! Echo-path synthesis: image-method room impulse responses, convolution and
//! ESR-calibrated microphone mixtures.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinear::{apply_nonlinearity, NonlinearModel};
use crate::signal::{ensure_same_rate, TimeSignal};

pub const DEFAULT_SOUND_SPEED: f64 = 343.0;

/// How wall reflections are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallReflection {
    /// Uniform coefficient derived from a reverberation time via Sabine.
    T60(f64),
    /// Uniform pressure reflection coefficient in `[0, 1)`.
    Coefficient(f64),
}

/// Shoebox room with one omnidirectional source and microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub source: [f64; 3],
    pub mic: [f64; 3],
    pub reflection: WallReflection,
    pub rir_length: usize,
    pub sample_rate: u32,
    pub sound_speed: f64,
}

impl RoomSpec {
    /// 5 x 4 x 3 m room used by the shipped scenarios.
    pub fn default_room(t60: f64, rir_length: usize, sample_rate: u32) -> Self {
        Self {
            dimensions: [5.0, 4.0, 3.0],
            source: [2.0, 3.0, 1.5],
            mic: [2.5, 1.0, 1.2],
            reflection: WallReflection::T60(t60),
            rir_length,
            sample_rate,
            sound_speed: DEFAULT_SOUND_SPEED,
        }
    }

    pub fn distance(&self) -> f64 {
        dist(&self.source, &self.mic)
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Wall reflection coefficient. For a T60 this is
    /// `sqrt(1 - 24 V ln10 / (c S T60))`, clamped to `[0, 1)`.
    pub fn beta(&self) -> f64 {
        match self.reflection {
            WallReflection::Coefficient(b) => b,
            WallReflection::T60(t60) => {
                let alpha = 24.0 * self.volume() * std::f64::consts::LN_10
                    / (self.sound_speed * self.surface() * t60);
                (1.0 - alpha).max(0.0).sqrt().min(1.0 - 1e-12)
            }
        }
    }

    fn direct_delay(&self) -> usize {
        (self.sample_rate as f64 * self.distance() / self.sound_speed).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.sound_speed.is_finite() && self.sound_speed > 0.0) {
            return bad(format!(
                "sound speed must be positive, got {}",
                self.sound_speed
            ));
        }
        for (i, l) in self.dimensions.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return bad(format!("room dimension {i} must be positive, got {l}"));
            }
            for (name, p) in [("source", &self.source), ("mic", &self.mic)] {
                if !(p[i] > 0.0 && p[i] < *l) {
                    return bad(format!(
                        "{name} coordinate {i} = {} lies outside the open interval (0, {l})",
                        p[i]
                    ));
                }
            }
        }
        match self.reflection {
            WallReflection::T60(t) if !(t.is_finite() && t > 0.0) => {
                return bad(format!("t60 must be positive, got {t}"))
            }
            WallReflection::Coefficient(b) if !(0.0..1.0).contains(&b) => {
                return bad(format!(
                    "reflection coefficient must lie in [0, 1), got {b}"
                ))
            }
            _ => {}
        }
        if self.distance() == 0.0 {
            return bad("source and microphone coincide".into());
        }
        if self.rir_length <= self.direct_delay() {
            return bad(format!(
                "rir_length {} does not reach the direct path at sample {}",
                self.rir_length,
                self.direct_delay()
            ));
        }
        Ok(())
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Allen-Berkley image-source RIR with delays rounded to the nearest sample.
pub fn generate_rir(spec: &RoomSpec) -> Result<TimeSignal> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let c = spec.sound_speed;
    let beta = spec.beta();
    let len = spec.rir_length;
    let max_dist = len as f64 * c / fs;
    let orders: Vec<i64> = spec
        .dimensions
        .iter()
        .map(|l| (max_dist / (2.0 * l)).ceil() as i64 + 1)
        .collect();

    let mut h = vec![0.0; len];
    // Axis-wise image coordinates and reflection counts, enumerated once.
    let axis = |a: usize| -> Vec<(f64, i32)> {
        let l = spec.dimensions[a];
        let mut out = Vec::new();
        for n in -orders[a]..=orders[a] {
            for q in 0..2i64 {
                let pos = (1 - 2 * q) as f64 * spec.source[a] + 2.0 * n as f64 * l;
                let reflections = ((n - q).abs() + n.abs()) as i32;
                out.push((pos - spec.mic[a], reflections));
            }
        }
        out
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    for &(dx, rx) in &ax {
        for &(dy, ry) in &ay {
            let dxy = dx * dx + dy * dy;
            if dxy.sqrt() > max_dist {
                continue;
            }
            for &(dz, rz) in &az {
                let d = (dxy + dz * dz).sqrt();
                let tap = (fs * d / c).round() as usize;
                if tap >= len {
                    continue;
                }
                let gain = beta.powi(rx + ry + rz);
                if gain == 0.0 {
                    continue;
                }
                h[tap] += gain / (4.0 * PI * d);
            }
        }
    }
    TimeSignal::new(h, spec.sample_rate)
}

/// Reverberation time from Schroeder backward integration, using a line fit
/// to the energy decay curve between -5 and -25 dB extrapolated to -60 dB.
pub fn schroeder_t60(rir: &TimeSignal) -> Option<f64> {
    let h = rir.samples();
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    if acc == 0.0 {
        return None;
    }
    let total = edc[0];
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let start = db.iter().position(|&v| v <= -5.0)?;
    let end = db.iter().position(|&v| v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let fs = rir.sample_rate() as f64;
    let pts: Vec<(f64, f64)> = (start..=end).map(|i| (i as f64 / fs, db[i])).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = cov / var;
    (slope < 0.0).then(|| -60.0 / slope)
}

/// Linear convolution truncated to the input length, computed with one FFT
/// of size `>= len(signal) + len(rir) - 1`.
pub fn convolve(signal: &TimeSignal, rir: &TimeSignal) -> Result<TimeSignal> {
    ensure_same_rate(signal, rir, "convolve")?;
    let n = signal.len();
    if n == 0 || rir.is_empty() {
        return Ok(TimeSignal::zeros(n, signal.sample_rate()));
    }
    let size = (n + rir.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let load = |x: &[f64]| {
        let mut buf = vec![Complex64::default(); size];
        for (b, v) in buf.iter_mut().zip(x) {
            b.re = *v;
        }
        buf
    };
    let mut a = load(signal.samples());
    let mut b = load(rir.samples());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    TimeSignal::new(
        a[..n].iter().map(|z| z.re * scale).collect(),
        signal.sample_rate(),
    )
}

/// A synthesized microphone signal `y = d + g * s` with its components.
#[derive(Debug, Clone)]
pub struct MixtureScenario {
    pub far_end: TimeSignal,
    /// Unscaled near-end input.
    pub near_end: TimeSignal,
    pub model: NonlinearModel,
    pub rir: TimeSignal,
    pub esr_target_db: Option<f64>,
    pub echo: TimeSignal,
    /// `g * s`, the near-end component actually present in the microphone.
    pub scaled_near_end: TimeSignal,
    pub microphone: TimeSignal,
    pub near_end_gain: f64,
}

/// Builds `y = h * f(x) + g s`, choosing `g` so that the echo-to-near-end
/// power ratio equals `esr_target_db`. With no target, `g = 1`.
pub fn synthesize_mixture(
    far_end: &TimeSignal,
    near_end: &TimeSignal,
    model: &NonlinearModel,
    rir: &TimeSignal,
    esr_target_db: Option<f64>,
) -> Result<MixtureScenario> {
    ensure_same_rate(far_end, near_end, "mixture")?;
    ensure_same_rate(far_end, rir, "mixture")?;
    let len = far_end.len().max(near_end.len());
    let x = far_end.resized(len);
    let s = near_end.resized(len);
    let echo = convolve(&apply_nonlinearity(model, &x), rir)?;
    let gain = match esr_target_db {
        None => 1.0,
        Some(esr) => {
            if !esr.is_finite() {
                return Err(Error::Argument(format!(
                    "ESR target must be finite, got {esr}"
                )));
            }
            let ps = s.power();
            if ps == 0.0 {
                return Err(Error::Argument(
                    "near-end signal is silent; an ESR target cannot be met".into(),
                ));
            }
            let pd = echo.power();
            if pd == 0.0 {
                return Err(Error::Argument(
                    "echo is silent; an ESR target cannot be met".into(),
                ));
            }
            (pd / (ps * 10f64.powf(esr / 10.0))).sqrt()
        }
    };
    let scaled = s.scaled(gain);
    let mic: Vec<f64> = echo
        .samples()
        .iter()
        .zip(scaled.samples())
        .map(|(d, v)| d + v)
        .collect();
    Ok(MixtureScenario {
        far_end: x,
        near_end: s,
        model: *model,
        rir: rir.clone(),
        esr_target_db,
        microphone: TimeSignal::new(mic, far_end.sample_rate())?,
        echo,
        scaled_near_end: scaled,
        near_end_gain: gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::measure_esr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn anechoic(source: [f64; 3]) -> RoomSpec {
        RoomSpec {
            dimensions: [10.0, 10.0, 10.0],
            source,
            mic: [5.0, 5.0, 5.0],
            reflection: WallReflection::Coefficient(0.0),
            rir_length: 2048,
            sample_rate: 16000,
            sound_speed: DEFAULT_SOUND_SPEED,
        }
    }

    #[test]
    fn anechoic_single_tap() {
        let spec = anechoic([2.0, 5.0, 5.0]);
        let h = generate_rir(&spec).unwrap();
        let nz: Vec<usize> = (0..h.len()).filter(|&i| h.samples()[i] != 0.0).collect();
        let d = 3.0;
        assert_eq!(nz, vec![(16000.0 * d / 343.0f64).round() as usize]);
        assert!((h.samples()[nz[0]] - 1.0 / (4.0 * PI * d)).abs() < 1e-15);

        let far = generate_rir(&anechoic([5.0, 5.0, 8.0])).unwrap();
        let near = generate_rir(&anechoic([5.0, 5.0, 6.5])).unwrap();
        assert!((near.peak() / far.peak() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_geometry() {
        let mut spec = RoomSpec::default_room(0.2, 4000, 16000);
        spec.mic = [5.0, 1.0, 1.0];
        assert!(generate_rir(&spec).is_err());
        let mut spec = RoomSpec::default_room(0.2, 4000, 16000);
        spec.rir_length = 10;
        assert!(generate_rir(&spec).is_err());
        let mut spec = RoomSpec::default_room(-1.0, 4000, 16000);
        assert!(generate_rir(&spec).is_err());
        spec.reflection = WallReflection::Coefficient(1.0);
        assert!(generate_rir(&spec).is_err());
        let mut spec = RoomSpec::default_room(0.2, 4000, 16000);
        spec.mic = spec.source;
        assert!(generate_rir(&spec).is_err());
    }

    #[test]
    fn sabine_beta() {
        let spec = RoomSpec::default_room(0.2, 4000, 16000);
        let alpha = 24.0 * 60.0 * std::f64::consts::LN_10 / (343.0 * 94.0 * 0.2);
        assert!((spec.beta() - (1.0 - alpha).sqrt()).abs() < 1e-15);
        // too short a T60 for the room saturates to full absorption
        assert_eq!(RoomSpec::default_room(0.01, 4000, 16000).beta(), 0.0);
    }

    #[test]
    fn reverberant_rir_decays() {
        let h = generate_rir(&RoomSpec::default_room(0.2, 3200, 16000)).unwrap();
        let e = |r: std::ops::Range<usize>| h.samples()[r].iter().map(|v| v * v).sum::<f64>();
        assert!(e(2880..3200) < e(0..320));
        let t60 = schroeder_t60(&h).unwrap();
        assert!((t60 - 0.2).abs() <= 0.05, "t60 {t60}");
    }

    fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|n| (0..h.len().min(n + 1)).map(|k| h[k] * x[n - k]).sum())
            .collect()
    }

    #[test]
    fn convolution_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = TimeSignal::new(
            (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect(),
            16000,
        )
        .unwrap();
        let mut imp = vec![0.0; 8];
        imp[0] = 1.0;
        let y = convolve(&x, &TimeSignal::new(imp, 16000).unwrap()).unwrap();
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut del = vec![0.0; 8];
        del[5] = 1.0;
        let y = convolve(&x, &TimeSignal::new(del, 16000).unwrap()).unwrap();
        assert!(y.samples()[..5].iter().all(|v| v.abs() < 1e-12));
        for n in 5..1024 {
            assert!((y.samples()[n] - x.samples()[n - 5]).abs() < 1e-12);
        }
        let h: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = convolve(&x, &TimeSignal::new(h.clone(), 16000).unwrap()).unwrap();
        let r = direct(x.samples(), &h);
        let num: f64 = y
            .samples()
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = r.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() <= 1e-10);
        assert!(convolve(&x, &TimeSignal::zeros(4, 8000)).is_err());
    }

    fn noise(len: usize, seed: u64) -> TimeSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSignal::new(
            (0..len).map(|_| rng.random_range(-0.5..0.5)).collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn mixture_hits_esr() {
        let x = noise(16000, 1);
        let s = noise(12000, 2);
        let h = generate_rir(&RoomSpec::default_room(0.2, 1600, 16000)).unwrap();
        let m = NonlinearModel::hard_clip(0.3).unwrap();
        for esr in [60.0, 0.0, -5.0] {
            let mix = synthesize_mixture(&x, &s, &m, &h, Some(esr)).unwrap();
            assert_eq!(mix.microphone.len(), 16000);
            let got = measure_esr(&mix.echo, &mix.scaled_near_end).unwrap();
            assert!((got - esr).abs() <= 1e-6);
            for ((y, d), v) in mix
                .microphone
                .samples()
                .iter()
                .zip(mix.echo.samples())
                .zip(mix.scaled_near_end.samples())
            {
                assert_eq!(y.to_bits(), (d + v).to_bits());
            }
        }
    }

    #[test]
    fn mixture_gain_algebra() {
        // h = unit impulse and identity model make P_d = P_x
        let x = noise(4000, 3);
        let h = TimeSignal::new(vec![1.0], 16000).unwrap();
        let mix = synthesize_mixture(&x, &x, &NonlinearModel::Identity, &h, Some(20.0)).unwrap();
        assert!((mix.near_end_gain - 0.1).abs() < 1e-12);
        let mix = synthesize_mixture(&x, &x, &NonlinearModel::Identity, &h, Some(0.0)).unwrap();
        assert!((mix.near_end_gain - 1.0).abs() < 1e-12);

        let silent = TimeSignal::zeros(4000, 16000);
        let mix = synthesize_mixture(&x, &silent, &NonlinearModel::Identity, &h, None).unwrap();
        assert_eq!(mix.microphone, mix.echo);
        assert!(
            synthesize_mixture(&x, &silent, &NonlinearModel::Identity, &h, Some(10.0)).is_err()
        );
    }
}
