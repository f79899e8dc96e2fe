//! Echo-cancellation metrics over sliding rectangular windows.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{mean_square, TimeSignal};

/// Values are clamped to `[-CAP_DB, CAP_DB]`; perfect cancellation reports
/// `CAP_DB`.
pub const CAP_DB: f64 = 200.0;
const ERLE_FLOOR: f64 = 1e-20;

/// 1 s window with 0.25 s hop at 16 kHz.
pub const DEFAULT_WINDOW: usize = 16000;
pub const DEFAULT_HOP: usize = 4000;

/// A metric evaluated once per hop over a sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub values: Vec<f64>,
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl MetricSeries {
    /// Mean over the final 20% of the series (at least one value).
    pub fn steady_state(&self) -> f64 {
        steady_state(&self.values)
    }

    /// Time in seconds at the end of window `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        (i * self.hop + self.window) as f64 / self.sample_rate as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,value_db\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{:.6},{:.6}", self.time_of(i), v);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the `time_s,value_db` format written by [`MetricSeries::to_csv`].
    /// Only the values survive the round trip exactly to 6 decimals.
    pub fn parse_csv_values(text: &str) -> Result<Vec<f64>> {
        let mut lines = text.lines();
        match lines.next() {
            Some("time_s,value_db") => {}
            other => return Err(Error::Argument(format!("unexpected CSV header {other:?}"))),
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .nth(1)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Argument(format!("malformed CSV row {l:?}")))
            })
            .collect()
    }
}

pub fn steady_state(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let tail = (values.len() as f64 * 0.2).ceil().max(1.0) as usize;
    let tail = &values[values.len() - tail..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn check_window(window: usize, hop: usize) -> Result<()> {
    if hop == 0 || window < hop {
        return Err(Error::Argument(format!(
            "metric window must be at least the hop and the hop positive (window {window}, hop {hop})"
        )));
    }
    Ok(())
}

fn check_lengths(signals: &[&TimeSignal]) -> Result<()> {
    let first = signals[0];
    for s in &signals[1..] {
        if s.len() != first.len() {
            return Err(Error::Argument(format!(
                "signals have different lengths ({} vs {})",
                first.len(),
                s.len()
            )));
        }
        if s.sample_rate() != first.sample_rate() {
            return Err(Error::Argument(
                "signals have different sample rates".into(),
            ));
        }
    }
    Ok(())
}

/// Window sums of `num` and `den`; only full windows are kept.
fn windowed_ratio(
    len: usize,
    window: usize,
    hop: usize,
    num: impl Fn(usize) -> f64,
    den: impl Fn(usize) -> f64,
    den_floor: f64,
) -> Vec<f64> {
    if len < window {
        return Vec::new();
    }
    let count = (len - window) / hop + 1;
    (0..count)
        .map(|i| {
            let r = i * hop..i * hop + window;
            let n: f64 = r.clone().map(&num).sum();
            let d: f64 = r.map(&den).sum::<f64>() + den_floor;
            ratio_db(n, d)
        })
        .collect()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { CAP_DB };
    }
    if num == 0.0 {
        return -CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-CAP_DB, CAP_DB)
}

/// `10 log10(sum y^2 / sum e^2)` per window.
pub fn erle(
    microphone: &TimeSignal,
    estimate: &TimeSignal,
    window: usize,
    hop: usize,
) -> Result<MetricSeries> {
    check_window(window, hop)?;
    check_lengths(&[microphone, estimate])?;
    let (y, e) = (microphone.samples(), estimate.samples());
    let values = windowed_ratio(
        y.len(),
        window,
        hop,
        |t| y[t] * y[t],
        |t| e[t] * e[t],
        ERLE_FLOOR,
    );
    Ok(MetricSeries {
        values,
        window,
        hop,
        sample_rate: microphone.sample_rate(),
    })
}

/// `10 log10(sum d^2 / sum (e - s)^2)` per window, where `s` is the
/// near-end component actually present in the microphone.
pub fn terle(
    echo: &TimeSignal,
    estimate: &TimeSignal,
    near_end: &TimeSignal,
    window: usize,
    hop: usize,
) -> Result<MetricSeries> {
    check_window(window, hop)?;
    check_lengths(&[echo, estimate, near_end])?;
    let (d, e, s) = (echo.samples(), estimate.samples(), near_end.samples());
    let values = windowed_ratio(
        d.len(),
        window,
        hop,
        |t| d[t] * d[t],
        |t| (e[t] - s[t]) * (e[t] - s[t]),
        0.0,
    );
    Ok(MetricSeries {
        values,
        window,
        hop,
        sample_rate: echo.sample_rate(),
    })
}

/// Echo-to-near-end power ratio over the whole signals.
pub fn measure_esr(echo: &TimeSignal, near_end: &TimeSignal) -> Result<f64> {
    let pd = mean_square(echo.samples());
    let ps = mean_square(near_end.samples());
    if pd == 0.0 || ps == 0.0 {
        return Err(Error::Argument("ESR undefined for a silent signal".into()));
    }
    Ok(10.0 * (pd / ps).log10())
}
