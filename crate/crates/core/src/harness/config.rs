//! Scenario configuration files (TOML).
//!
//! Relative paths inside a file are resolved against the directory holding
//! it. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::baseline::DEFAULT_STEP;
use crate::harness::generators::{speech_like, white_noise};
use crate::metrics::{DEFAULT_HOP, DEFAULT_WINDOW};
use crate::nonlinear::{NonlinearModel, NonlinearityKind};
use crate::room::{RoomSpec, WallReflection, DEFAULT_SOUND_SPEED};
use crate::sbss::{SbssParams, DEFAULT_LEARNING_RATE, DEFAULT_ORDER};
use crate::signal::{read_wav_channel, StftConfig, TimeSignal};

pub const DEFAULT_SAMPLE_RATE: u32 = 16000;
pub const DEFAULT_DURATION_S: f64 = 10.0;
pub const DEFAULT_RIR_LENGTH: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Far end plus a weak white-noise near end; reports ERLE.
    SingleTalk,
    /// Far end and near-end talker; reports tERLE.
    DoubleTalk,
    /// A recorded far-end/microphone pair; no ground truth, no metrics.
    RealCapture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoneKeyword {
    None,
}

/// Echo-to-near-end ratio target, a number in dB or the string `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EsrSetting {
    Db(f64),
    Keyword(NoneKeyword),
}

impl EsrSetting {
    pub fn db(self) -> Option<f64> {
        match self {
            EsrSetting::Db(v) => Some(v),
            EsrSetting::Keyword(_) => None,
        }
    }
}

/// A saturation kind with either a fixed threshold or an SDR target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl NonlinearityConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("nonlinearity: {m}")));
        match self.kind {
            NonlinearityKind::Identity => {
                if self.x_max.is_some() || self.sdr_db.is_some() || self.rho.is_some() {
                    return err("identity takes no x_max, sdr_db or rho");
                }
            }
            kind => {
                if self.x_max.is_some() == self.sdr_db.is_some() {
                    return err("give exactly one of x_max and sdr_db");
                }
                if kind == NonlinearityKind::HardClip && self.rho.is_some() {
                    return err("rho only applies to soft_saturation");
                }
                let check = |x: f64| {
                    NonlinearModel::of_kind(kind, x, self.rho)
                        .map_err(|e| Error::Config(format!("nonlinearity: {e}")))
                };
                check(self.x_max.unwrap_or(1.0))?;
                if let Some(s) = self.sdr_db {
                    if !s.is_finite() {
                        return err("sdr_db must be finite");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Shoebox room. Exactly one of `t60` and `reflection_coefficient`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    #[serde(default = "default_dimensions")]
    pub dimensions: [f64; 3],
    #[serde(default = "default_source")]
    pub source: [f64; 3],
    #[serde(default = "default_mic")]
    pub mic: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t60: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_coefficient: Option<f64>,
    #[serde(default = "default_rir_length")]
    pub rir_length: usize,
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
}

fn default_dimensions() -> [f64; 3] {
    RoomSpec::default_room(0.2, 1, 1).dimensions
}
fn default_source() -> [f64; 3] {
    RoomSpec::default_room(0.2, 1, 1).source
}
fn default_mic() -> [f64; 3] {
    RoomSpec::default_room(0.2, 1, 1).mic
}
fn default_rir_length() -> usize {
    DEFAULT_RIR_LENGTH
}
fn default_sound_speed() -> f64 {
    DEFAULT_SOUND_SPEED
}

impl RoomConfig {
    pub fn spec(&self, sample_rate: u32) -> Result<RoomSpec> {
        let reflection = match (self.t60, self.reflection_coefficient) {
            (Some(t), None) => WallReflection::T60(t),
            (None, Some(b)) => WallReflection::Coefficient(b),
            _ => {
                return Err(Error::Config(
                    "room: give exactly one of t60 and reflection_coefficient".into(),
                ))
            }
        };
        let spec = RoomSpec {
            dimensions: self.dimensions,
            source: self.source,
            mic: self.mic,
            reflection,
            rir_length: self.rir_length,
            sample_rate,
            sound_speed: self.sound_speed,
        };
        spec.validate()
            .map_err(|e| Error::Config(format!("room: {e}")))?;
        Ok(spec)
    }
}

fn default_f0() -> f64 {
    210.0
}
fn default_peak() -> f64 {
    0.9
}
fn default_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    SpeechLike {
        #[serde(default = "default_f0")]
        f0_hz: f64,
        #[serde(default = "default_peak")]
        peak: f64,
    },
    WhiteNoise {
        #[serde(default = "default_gain")]
        gain: f64,
    },
    Silence,
    File {
        path: PathBuf,
        #[serde(default)]
        channel: usize,
    },
}

impl SourceConfig {
    fn validate(&self, what: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{what}: {m}")));
        match self {
            SourceConfig::SpeechLike { f0_hz, peak } => {
                if !(f0_hz.is_finite() && *f0_hz > 0.0) {
                    return bad(format!("f0_hz must be positive, got {f0_hz}"));
                }
                if !(peak.is_finite() && *peak > 0.0) {
                    return bad(format!("peak must be positive, got {peak}"));
                }
            }
            SourceConfig::WhiteNoise { gain } => {
                if !(gain.is_finite() && *gain >= 0.0) {
                    return bad(format!("gain must be non-negative, got {gain}"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Generates or loads the signal. Generated sources have `len` samples;
    /// files keep their own length.
    pub fn build(&self, len: usize, sample_rate: u32, seed: u64) -> Result<TimeSignal> {
        Ok(match self {
            SourceConfig::SpeechLike { f0_hz, peak } => {
                speech_like(len, sample_rate, *f0_hz, *peak, seed)
            }
            SourceConfig::WhiteNoise { gain } => white_noise(len, sample_rate, *gain, seed),
            SourceConfig::Silence => TimeSignal::zeros(len, sample_rate),
            SourceConfig::File { path, channel } => {
                let s = read_wav_channel(path, *channel)?;
                if s.sample_rate() != sample_rate {
                    return Err(Error::Config(format!(
                        "{} is sampled at {} Hz but the scenario runs at {sample_rate} Hz",
                        path.display(),
                        s.sample_rate()
                    )));
                }
                s
            }
        })
    }

    fn resolve(&mut self, base: &Path) {
        if let SourceConfig::File { path, .. } = self {
            *path = base.join(&*path);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_hop")]
    pub hop: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_hop() -> usize {
    DEFAULT_HOP
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            hop: DEFAULT_HOP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { step: DEFAULT_STEP }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}
fn default_duration() -> f64 {
    DEFAULT_DURATION_S
}
fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    /// Length of generated sources. File sources keep their own length.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esr_db: Option<EsrSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_file: Option<PathBuf>,
    /// Recorded microphone signal, `real_capture` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microphone_file: Option<PathBuf>,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<NonlinearityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomConfig>,
    pub far_end: SourceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_end: Option<SourceConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl ScenarioConfig {
    /// Parses and validates a config, resolving relative paths against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.rir_file, &mut self.microphone_file]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        self.far_end.resolve(base);
        if let Some(n) = &mut self.near_end {
            n.resolve(base);
        }
    }

    pub fn sbss_params(&self) -> SbssParams {
        SbssParams {
            order: self.order,
            learning_rate: self.learning_rate,
            stft: self.stft,
            ..Default::default()
        }
    }

    /// Number of samples for generated sources.
    pub fn generated_len(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        self.sbss_params().validate()?;
        if self.metrics.hop == 0 || self.metrics.window < self.metrics.hop {
            return bad("metrics: window must be at least hop, and hop positive".into());
        }
        if !(self.baseline.step.is_finite() && self.baseline.step >= 0.0) {
            return bad(format!(
                "baseline: step must be non-negative, got {}",
                self.baseline.step
            ));
        }
        if let Some(EsrSetting::Db(v)) = self.esr_db {
            if !v.is_finite() {
                return bad(format!("esr_db must be finite or \"none\", got {v}"));
            }
        }
        self.far_end.validate("far_end")?;
        if let Some(n) = &self.near_end {
            n.validate("near_end")?;
        }

        match self.mode {
            Mode::RealCapture => {
                if self.microphone_file.is_none() {
                    return bad("real_capture needs microphone_file".into());
                }
                if !matches!(self.far_end, SourceConfig::File { .. }) {
                    return bad("real_capture needs a file far_end".into());
                }
                let extra = [
                    ("room", self.room.is_some()),
                    ("rir_file", self.rir_file.is_some()),
                    ("nonlinearity", self.nonlinearity.is_some()),
                    ("near_end", self.near_end.is_some()),
                    ("esr_db", self.esr_db.is_some()),
                ];
                if let Some((name, _)) = extra.iter().find(|e| e.1) {
                    return bad(format!("{name} does not apply to real_capture"));
                }
            }
            Mode::SingleTalk | Mode::DoubleTalk => {
                if self.microphone_file.is_some() {
                    return bad("microphone_file only applies to real_capture".into());
                }
                match (&self.room, &self.rir_file) {
                    (Some(room), None) => {
                        room.spec(self.sample_rate)?;
                    }
                    (None, Some(_)) => {}
                    _ => return bad("give exactly one of [room] and rir_file".into()),
                }
                match &self.nonlinearity {
                    Some(n) => n.validate()?,
                    None => return bad("missing [nonlinearity] section".into()),
                }
                if self.mode == Mode::DoubleTalk && self.near_end.is_none() {
                    return bad("double_talk needs a [near_end] source".into());
                }
            }
        }
        Ok(())
    }

    /// The near-end source, defaulting to white noise in single talk.
    pub fn near_end_source(&self) -> SourceConfig {
        self.near_end
            .clone()
            .unwrap_or(SourceConfig::WhiteNoise { gain: 1.0 })
    }
}

/// Config for the standalone RIR tool: a sample rate and a `[room]` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RirConfig {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    pub room: RoomConfig,
}

impl RirConfig {
    /// Reads either a bare RIR config or a scenario config with a `[room]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let direct: std::result::Result<RirConfig, _> = toml::from_str(&text);
        let cfg = match direct {
            Ok(c) => c,
            Err(first) => {
                let base = path.parent().unwrap_or(Path::new(""));
                let scenario = ScenarioConfig::from_toml_str(&text, base)
                    .map_err(|_| Error::Config(format!("{}: {first}", path.display())))?;
                match scenario.room {
                    Some(room) => RirConfig {
                        sample_rate: scenario.sample_rate,
                        room,
                    },
                    None => {
                        return Err(Error::Config(format!(
                            "{}: scenario has no [room] section",
                            path.display()
                        )))
                    }
                }
            }
        };
        cfg.spec()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<RoomSpec> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        self.room.spec(self.sample_rate)
    }
}
