//! Memoryless loudspeaker nonlinearities and the odd-power basis expansion.
//!
//! The saturating models are the ground truth used to simulate a distorted
//! echo. The canceller never sees them; it only sees the basis signals
//! `x, x^3, x^5, ...` produced by [`expand_basis`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSignal;

pub const DEFAULT_RHO: f64 = 2.0;

const CALIBRATION_TOL_DB: f64 = 1e-3;
const CALIBRATION_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    HardClip,
    SoftSaturation,
    Identity,
}

/// A memoryless odd nonlinearity `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearModel {
    /// Clamps to `[-x_max, x_max]`.
    HardClip {
        x_max: f64,
    },
    /// `x_max * x / (x_max^rho + |x|^rho)^(1/rho)`.
    SoftSaturation {
        x_max: f64,
        rho: f64,
    },
    Identity,
}

impl NonlinearModel {
    pub fn hard_clip(x_max: f64) -> Result<Self> {
        check_positive("x_max", x_max)?;
        Ok(Self::HardClip { x_max })
    }

    pub fn soft_saturation(x_max: f64, rho: f64) -> Result<Self> {
        check_positive("x_max", x_max)?;
        check_positive("rho", rho)?;
        Ok(Self::SoftSaturation { x_max, rho })
    }

    /// Builds a model of the given kind. `rho` defaults to 2 for soft saturation
    /// and is ignored otherwise.
    pub fn of_kind(kind: NonlinearityKind, x_max: f64, rho: Option<f64>) -> Result<Self> {
        match kind {
            NonlinearityKind::HardClip => Self::hard_clip(x_max),
            NonlinearityKind::SoftSaturation => {
                Self::soft_saturation(x_max, rho.unwrap_or(DEFAULT_RHO))
            }
            NonlinearityKind::Identity => Ok(Self::Identity),
        }
    }

    pub fn kind(&self) -> NonlinearityKind {
        match self {
            Self::HardClip { .. } => NonlinearityKind::HardClip,
            Self::SoftSaturation { .. } => NonlinearityKind::SoftSaturation,
            Self::Identity => NonlinearityKind::Identity,
        }
    }

    pub fn x_max(&self) -> Option<f64> {
        match *self {
            Self::HardClip { x_max } | Self::SoftSaturation { x_max, .. } => Some(x_max),
            Self::Identity => None,
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match *self {
            Self::SoftSaturation { rho, .. } => Some(rho),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::HardClip { x_max } => x.clamp(-x_max, x_max),
            Self::SoftSaturation { x_max, rho } => {
                if x == 0.0 {
                    return 0.0;
                }
                // Factor out the larger magnitude so the power never overflows.
                let a = x.abs();
                let m = a.max(x_max);
                let denom = m * ((x_max / m).powf(rho) + (a / m).powf(rho)).powf(1.0 / rho);
                // the exact value is strictly inside; rounding may land one ulp out
                (x_max * x / denom).clamp(-x_max, x_max)
            }
            Self::Identity => x,
        }
    }

    fn with_x_max(&self, x_max: f64) -> Self {
        match *self {
            Self::HardClip { .. } => Self::HardClip { x_max },
            Self::SoftSaturation { rho, .. } => Self::SoftSaturation { x_max, rho },
            Self::Identity => Self::Identity,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

pub fn apply_nonlinearity(model: &NonlinearModel, x: &TimeSignal) -> TimeSignal {
    match model {
        NonlinearModel::Identity => x.clone(),
        m => x.map(|v| m.eval(v)),
    }
}

/// The odd-power basis signals `phi_i(x) = x^(2i-1)`, `i = 1..=p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisStack {
    signals: Vec<TimeSignal>,
}

impl BasisStack {
    pub fn order(&self) -> usize {
        self.signals.len()
    }

    pub fn signals(&self) -> &[TimeSignal] {
        &self.signals
    }

    pub fn get(&self, i: usize) -> &TimeSignal {
        &self.signals[i]
    }
}

pub fn expand_basis(x: &TimeSignal, order: usize) -> Result<BasisStack> {
    if order == 0 {
        return Err(Error::Argument("expansion order must be at least 1".into()));
    }
    let mut signals = Vec::with_capacity(order);
    signals.push(x.clone());
    let sq: Vec<f64> = x.samples().iter().map(|v| v * v).collect();
    for i in 1..order {
        let prev = signals[i - 1].samples();
        let next: Vec<f64> = prev.iter().zip(&sq).map(|(p, s)| p * s).collect();
        signals.push(TimeSignal::new(next, x.sample_rate())?);
    }
    Ok(BasisStack { signals })
}

/// Result of an SDR measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sdr {
    Db(f64),
    /// `f(x) == x` on every sample.
    Undistorted,
}

impl Sdr {
    pub fn db(self) -> f64 {
        match self {
            Sdr::Db(v) => v,
            Sdr::Undistorted => f64::INFINITY,
        }
    }
}

/// `10 log10(E[x^2] / E[(f(x) - x)^2])` with full-signal sample means.
pub fn measure_sdr(x: &TimeSignal, model: &NonlinearModel) -> Sdr {
    sdr_of(x.samples(), model)
}

fn sdr_of(x: &[f64], model: &NonlinearModel) -> Sdr {
    let mut sig = 0.0;
    let mut dist = 0.0;
    for &v in x {
        let d = model.eval(v) - v;
        sig += v * v;
        dist += d * d;
    }
    if dist == 0.0 {
        Sdr::Undistorted
    } else {
        Sdr::Db(10.0 * (sig / dist).log10())
    }
}

/// Finds the threshold `x_max` at which `kind` distorts `x` to `target_db`.
///
/// SDR grows monotonically with `x_max` for both saturating kinds, so the
/// threshold is found by bisection on `log(x_max)`. The returned model
/// measures within 1e-3 dB of the target.
pub fn calibrate_sdr(
    x: &TimeSignal,
    kind: NonlinearityKind,
    target_db: f64,
    rho: Option<f64>,
) -> Result<NonlinearModel> {
    let peak = x.peak();
    let template = match kind {
        NonlinearityKind::Identity => {
            return Err(Error::Argument(
                "the identity model has no threshold to calibrate".into(),
            ))
        }
        k => NonlinearModel::of_kind(k, 1.0, rho)?,
    };
    if peak == 0.0 {
        return Err(Error::Argument(
            "cannot calibrate on a silent signal".into(),
        ));
    }
    let samples = x.samples();
    let sdr_at = |x_max: f64| sdr_of(samples, &template.with_x_max(x_max)).db();

    let mut lo = peak * 1e-9;
    let mut hi = match kind {
        // no clipping at all at the peak
        NonlinearityKind::HardClip => peak,
        _ => {
            let mut hi = peak;
            while sdr_at(hi) < target_db && hi < peak * 1e12 {
                hi *= 2.0;
            }
            hi
        }
    };
    let (min_db, max_db) = (sdr_at(lo), sdr_at(hi));
    if !target_db.is_finite() || target_db <= min_db || target_db >= max_db {
        return Err(Error::Calibration {
            target_db,
            min_db,
            max_db,
        });
    }
    for _ in 0..CALIBRATION_MAX_ITERS {
        let mid = (lo * hi).sqrt();
        let s = sdr_at(mid);
        if (s - target_db).abs() <= CALIBRATION_TOL_DB {
            return Ok(template.with_x_max(mid));
        }
        if s < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Plateaus can only come from a handful of distinct sample values.
    let best = [lo, hi]
        .into_iter()
        .min_by(|a, b| {
            (sdr_at(*a) - target_db)
                .abs()
                .total_cmp(&(sdr_at(*b) - target_db).abs())
        })
        .unwrap();
    if (sdr_at(best) - target_db).abs() <= 0.01 {
        Ok(template.with_x_max(best))
    } else {
        Err(Error::Calibration {
            target_db,
            min_db,
            max_db,
        })
    }
}
