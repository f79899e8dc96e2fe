use std::path::{Path, PathBuf};

use sbss_aec::harness::config::{EsrSetting, Mode, NonlinearityConfig, SourceConfig};
use sbss_aec::harness::{build_scenario, run_scenario, RunReport, ScenarioConfig};
use sbss_aec::*;

fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(name)
}

fn short(name: &str, secs: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::load(preset_path(name)).unwrap();
    cfg.duration_s = secs;
    cfg
}

#[test]
fn presets_load_and_round_trip() {
    for name in [
        "single_talk.toml",
        "double_talk_hard.toml",
        "double_talk_soft.toml",
    ] {
        let cfg = ScenarioConfig::load(preset_path(name)).unwrap();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string(), Path::new("/")).unwrap();
        assert_eq!(cfg, again, "{name}");
        assert_eq!(cfg.order, 3);
        assert_eq!(cfg.learning_rate, 0.1);
        assert_eq!(cfg.sample_rate, 16000);
    }
}

#[test]
fn report_is_recomputable_from_artifacts() {
    let cfg = short("single_talk.toml", 4.0);
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&cfg, dir.path()).unwrap();
    let a = &report.artifacts;

    let x = read_wav(&a["far_end"]).unwrap();
    let y = read_wav(&a["microphone"]).unwrap();
    let d = read_wav(&a["echo"]).unwrap();
    let v = read_wav(&a["near_end"]).unwrap();
    let e = read_wav(&a["estimate"]).unwrap();
    let b = read_wav(&a["baseline_estimate"]).unwrap();

    let m = report.metric.as_ref().unwrap();
    assert_eq!(m.name, "erle");
    assert_eq!(
        erle(&y, &e, m.window, m.hop).unwrap().steady_state(),
        m.steady_state_db
    );
    assert_eq!(
        erle(&y, &b, m.window, m.hop).unwrap().steady_state(),
        m.baseline_steady_state_db
    );
    assert_eq!(Some(measure_esr(&d, &v).unwrap()), report.achieved_esr_db);
    assert!((report.achieved_esr_db.unwrap() - 60.0).abs() < 1e-3);

    let nl = report.nonlinearity.as_ref().unwrap();
    let model = NonlinearModel::of_kind(nl.kind, nl.x_max.unwrap(), nl.rho).unwrap();
    assert_eq!(measure_sdr(&x, &model).db(), nl.achieved_sdr_db);
    assert!((nl.achieved_sdr_db - 5.0).abs() <= 0.01);

    // the CSV carries the same series to 6 decimals
    let csv = std::fs::read_to_string(&a["erle"]).unwrap();
    let values = MetricSeries::parse_csv_values(&csv).unwrap();
    let series = erle(&y, &e, m.window, m.hop).unwrap();
    assert_eq!(values.len(), series.values.len());
    for (p, q) in values.iter().zip(&series.values) {
        assert!((p - q).abs() <= 5e-7);
    }

    // processing only the stored pair reproduces the estimate
    let (again, _) = process_stream(&x, &y, &cfg.sbss_params()).unwrap();
    let again = again.map(|s| s as f32 as f64);
    assert_eq!(again, e);

    // the report file and echoed config reload
    let loaded = RunReport::load(&a["report"]).unwrap();
    assert_eq!(loaded.metric, report.metric);
    assert_eq!(ScenarioConfig::load(&a["config"]).unwrap(), cfg);
}

#[test]
fn runs_are_deterministic() {
    let cfg = short("double_talk_soft.toml", 3.0);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let r1 = run_scenario(&cfg, d1.path()).unwrap();
    let r2 = run_scenario(&cfg, d2.path()).unwrap();
    for name in [
        "terle",
        "baseline_terle",
        "estimate",
        "microphone",
        "near_end",
    ] {
        let a = std::fs::read(&r1.artifacts[name]).unwrap();
        let b = std::fs::read(&r2.artifacts[name]).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
    let mut other = cfg.clone();
    other.seed = 2;
    let d3 = tempfile::tempdir().unwrap();
    let r3 = run_scenario(&other, d3.path()).unwrap();
    assert_ne!(
        std::fs::read(&r1.artifacts["microphone"]).unwrap(),
        std::fs::read(&r3.artifacts["microphone"]).unwrap()
    );
}

#[test]
fn double_talk_beats_baseline_and_stays_finite() {
    for name in ["double_talk_hard.toml", "double_talk_soft.toml"] {
        let cfg = short(name, 6.0);
        let sc = build_scenario(&cfg).unwrap();
        let (e, diag) = process_stream(&sc.far_end, &sc.microphone, &cfg.sbss_params()).unwrap();
        let d = sc.echo.as_ref().unwrap();
        let s = sc.near_end.as_ref().unwrap();
        let t = terle(d, &e, s, 16000, 4000).unwrap();
        assert!(t.values.iter().all(|v| v.is_finite()));
        let b = harness::baseline_fdaf(&sc.far_end, &sc.microphone, 3, cfg.stft, 0.5).unwrap();
        let tb = terle(d, &b, s, 16000, 4000).unwrap();
        assert!(
            t.steady_state() > tb.steady_state() + 3.0,
            "{name}: {} vs {}",
            t.steady_state(),
            tb.steady_state()
        );
        assert_eq!(diag.skipped_updates, 0);
    }
}

#[test]
fn anechoic_linear_case_converges() {
    let dir = tempfile::tempdir().unwrap();
    let rir = dir.path().join("impulse.wav");
    write_wav(
        &rir,
        &TimeSignal::new(vec![1.0], 16000).unwrap(),
        WavFormat::Float32,
    )
    .unwrap();
    let mut cfg = short("single_talk.toml", 10.0);
    cfg.room = None;
    cfg.rir_file = Some(rir);
    cfg.nonlinearity = Some(NonlinearityConfig {
        kind: NonlinearityKind::Identity,
        x_max: None,
        sdr_db: None,
        rho: None,
    });
    let report = run_scenario(&cfg, dir.path().join("out")).unwrap();
    let m = report.metric.unwrap();
    // pinned linear-case floor: reference run 43.70 dB, minus 1 dB
    assert!(m.steady_state_db >= 42.7, "{}", m.steady_state_db);
}

#[test]
fn real_capture_runs_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sc = build_scenario(&short("double_talk_hard.toml", 3.0)).unwrap();
    write_wav(dir.path().join("far.wav"), &sc.far_end, WavFormat::Float32).unwrap();
    write_wav(dir.path().join("mic.wav"), &sc.microphone, WavFormat::Pcm16).unwrap();
    let text = r#"
mode = "real_capture"
microphone_file = "mic.wav"
[far_end]
source = "file"
path = "far.wav"
"#;
    let cfg_path = dir.path().join("capture.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.mode, Mode::RealCapture);
    let report = run_scenario(&cfg, dir.path().join("out")).unwrap();
    assert!(report.metric.is_none());
    assert!(report.achieved_esr_db.is_none());
    assert!(!report.artifacts.contains_key("echo"));
    let e = read_wav(&report.artifacts["estimate"]).unwrap();
    assert_eq!(e.len(), sc.microphone.len());
}

#[test]
fn errors_carry_paths_and_kinds() {
    let mut cfg = short("single_talk.toml", 2.0);
    cfg.far_end = SourceConfig::File {
        path: "/nonexistent/far.wav".into(),
        channel: 0,
    };
    let err = run_scenario(&cfg, tempfile::tempdir().unwrap().path()).unwrap_err();
    assert!(err.is_io());
    assert!(err.to_string().contains("/nonexistent/far.wav"));

    let mut cfg = short("single_talk.toml", 2.0);
    cfg.nonlinearity.as_mut().unwrap().sdr_db = Some(-400.0);
    assert!(matches!(
        build_scenario(&cfg),
        Err(Error::Calibration { .. })
    ));

    // silent near end cannot meet an ESR target
    let mut cfg = short("single_talk.toml", 2.0);
    cfg.near_end = Some(SourceConfig::Silence);
    assert!(build_scenario(&cfg).is_err());
    cfg.esr_db = Some(EsrSetting::Db(f64::NAN));
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    assert!(ScenarioConfig::load("/nonexistent/scenario.toml")
        .unwrap_err()
        .is_io());
}
