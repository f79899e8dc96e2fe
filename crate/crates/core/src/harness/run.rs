//! Scenario execution: build the signals, run the canceller and the NLMS
//! comparator, measure, and write every artifact to an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::baseline::baseline_fdaf;
use crate::harness::config::{Mode, ScenarioConfig};
use crate::metrics::{erle, measure_esr, terle, MetricSeries};
use crate::nonlinear::{calibrate_sdr, measure_sdr, NonlinearModel, NonlinearityKind};
use crate::room::{generate_rir, synthesize_mixture};
use crate::sbss::process_stream;
use crate::signal::{read_wav, write_wav, TimeSignal, WavFormat};

/// Rounds every sample to `f32`, the precision of the written WAV files, so
/// that reported numbers can be recomputed from the artifacts.
fn quantize(s: &TimeSignal) -> TimeSignal {
    s.map(|v| v as f32 as f64)
}

/// Signals of a scenario, all at WAV precision.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub far_end: TimeSignal,
    pub microphone: TimeSignal,
    /// Echo component `d`; absent for recorded captures.
    pub echo: Option<TimeSignal>,
    /// Near-end component `g s` as present in the microphone.
    pub near_end: Option<TimeSignal>,
    pub rir: Option<TimeSignal>,
    pub model: Option<NonlinearModel>,
    pub near_end_gain: Option<f64>,
}

/// Generates, loads and mixes the signals described by `cfg`.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let fs = cfg.sample_rate;
    let len = cfg.generated_len();
    let x = quantize(&cfg.far_end.build(len, fs, cfg.seed)?);

    if cfg.mode == Mode::RealCapture {
        let path = cfg.microphone_file.as_ref().expect("validated");
        let y = read_wav(path)?;
        if y.sample_rate() != fs {
            return Err(Error::Config(format!(
                "{} is sampled at {} Hz but the scenario runs at {fs} Hz",
                path.display(),
                y.sample_rate()
            )));
        }
        return Ok(Scenario {
            far_end: x,
            microphone: quantize(&y),
            echo: None,
            near_end: None,
            rir: None,
            model: None,
            near_end_gain: None,
        });
    }

    let nl = cfg.nonlinearity.expect("validated");
    let model = match (nl.kind, nl.x_max, nl.sdr_db) {
        (NonlinearityKind::Identity, _, _) => NonlinearModel::Identity,
        (kind, Some(x_max), _) => NonlinearModel::of_kind(kind, x_max, nl.rho)?,
        (kind, None, Some(sdr)) => calibrate_sdr(&x, kind, sdr, nl.rho)?,
        (_, None, None) => unreachable!("validated"),
    };

    let rir = match (&cfg.room, &cfg.rir_file) {
        (Some(room), _) => generate_rir(&room.spec(fs)?)?,
        (None, Some(path)) => {
            let h = read_wav(path)?;
            if h.sample_rate() != fs {
                return Err(Error::Config(format!(
                    "{} is sampled at {} Hz but the scenario runs at {fs} Hz",
                    path.display(),
                    h.sample_rate()
                )));
            }
            h
        }
        (None, None) => unreachable!("validated"),
    };
    let rir = quantize(&rir);

    let s = cfg
        .near_end_source()
        .build(len, fs, cfg.seed.wrapping_add(1))?;
    let mix = synthesize_mixture(&x, &s, &model, &rir, cfg.esr_db.and_then(|e| e.db()))?;
    Ok(Scenario {
        far_end: mix.far_end,
        microphone: quantize(&mix.microphone),
        echo: Some(quantize(&mix.echo)),
        near_end: Some(quantize(&mix.scaled_near_end)),
        rir: Some(rir),
        model: Some(model),
        near_end_gain: Some(mix.near_end_gain),
    })
}

/// The nonlinearity actually applied, with its SDR on the far end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityReport {
    pub kind: NonlinearityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// `inf` when the far end is not distorted at all.
    pub achieved_sdr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `erle` or `terle`.
    pub name: String,
    pub window: usize,
    pub hop: usize,
    pub steady_state_db: f64,
    pub baseline_steady_state_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub samples: usize,
    pub frames: usize,
    pub skipped_updates: u64,
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_esr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_end_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<NonlinearityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricReport>,
    /// Artifact name to path.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub config: ScenarioConfig,
}

impl RunReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("reports always serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: BTreeMap<String, PathBuf>,
}

impl Writer<'_> {
    fn wav(&mut self, name: &str, s: &TimeSignal) -> Result<()> {
        let path = self.dir.join(format!("{name}.wav"));
        write_wav(&path, s, WavFormat::Float32)?;
        self.artifacts.insert(name.to_string(), path);
        Ok(())
    }

    fn csv(&mut self, name: &str, m: &MetricSeries) -> Result<()> {
        let path = self.dir.join(format!("{name}.csv"));
        m.write_csv(&path)?;
        self.artifacts.insert(name.to_string(), path);
        Ok(())
    }

    fn text(&mut self, name: &str, file: &str, body: &str) -> Result<()> {
        let path = self.dir.join(file);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(name.to_string(), path);
        Ok(())
    }
}

/// Runs a full scenario and writes its artifacts into `out_dir`:
///
/// - `estimate.wav`, `baseline_estimate.wav`: canceller and NLMS outputs
/// - `far_end.wav`, `microphone.wav`
/// - `echo.wav`, `near_end.wav`, `rir.wav` (simulated modes)
/// - `erle.csv` or `terle.csv` and the `baseline_` counterpart
/// - `config.toml` (the resolved config) and `report.toml`
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: impl AsRef<Path>) -> Result<RunReport> {
    let start = Instant::now();
    let out_dir = out_dir.as_ref();
    let sc = build_scenario(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let params = cfg.sbss_params();
    let (estimate, diag) = process_stream(&sc.far_end, &sc.microphone, &params)?;
    let estimate = quantize(&estimate);
    let baseline = quantize(&baseline_fdaf(
        &sc.far_end,
        &sc.microphone,
        cfg.order,
        cfg.stft,
        cfg.baseline.step,
    )?);

    let mut w = Writer {
        dir: out_dir,
        artifacts: BTreeMap::new(),
    };
    w.wav("estimate", &estimate)?;
    w.wav("baseline_estimate", &baseline)?;
    w.wav("far_end", &sc.far_end)?;
    w.wav("microphone", &sc.microphone)?;

    let (win, hop) = (cfg.metrics.window, cfg.metrics.hop);
    let mut metric = None;
    let mut achieved_esr_db = None;
    if let (Some(d), Some(v), Some(h)) = (&sc.echo, &sc.near_end, &sc.rir) {
        w.wav("echo", d)?;
        w.wav("near_end", v)?;
        w.wav("rir", h)?;
        achieved_esr_db = measure_esr(d, v).ok();
        let (name, ours, theirs) = match cfg.mode {
            Mode::DoubleTalk => (
                "terle",
                terle(d, &estimate, v, win, hop)?,
                terle(d, &baseline, v, win, hop)?,
            ),
            _ => (
                "erle",
                erle(&sc.microphone, &estimate, win, hop)?,
                erle(&sc.microphone, &baseline, win, hop)?,
            ),
        };
        w.csv(name, &ours)?;
        w.csv(&format!("baseline_{name}"), &theirs)?;
        metric = Some(MetricReport {
            name: name.to_string(),
            window: win,
            hop,
            steady_state_db: ours.steady_state(),
            baseline_steady_state_db: theirs.steady_state(),
        });
    }

    let nonlinearity = sc.model.map(|m| NonlinearityReport {
        kind: m.kind(),
        x_max: m.x_max(),
        rho: m.rho(),
        achieved_sdr_db: measure_sdr(&sc.far_end, &m).db(),
    });

    w.text("config", "config.toml", &cfg.to_toml_string())?;
    let report_path = out_dir.join("report.toml");
    w.artifacts.insert("report".into(), report_path.clone());
    let report = RunReport {
        mode: cfg.mode,
        seed: cfg.seed,
        samples: sc.microphone.len(),
        frames: diag.frames,
        skipped_updates: diag.skipped_updates,
        wall_clock_s: start.elapsed().as_secs_f64(),
        achieved_esr_db,
        near_end_gain: sc.near_end_gain,
        nonlinearity,
        metric,
        artifacts: w.artifacts,
        config: cfg.clone(),
    };
    std::fs::write(&report_path, report.to_toml_string())
        .map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}
