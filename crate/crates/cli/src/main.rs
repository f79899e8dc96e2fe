use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sbss_aec::harness::{run_scenario, RirConfig, ScenarioConfig};
use sbss_aec::metrics::{DEFAULT_HOP, DEFAULT_WINDOW};
use sbss_aec::nonlinear::DEFAULT_RHO;
use sbss_aec::*;

#[derive(Parser)]
#[command(
    name = "sbss-aec",
    version,
    about = "Nonlinear acoustic echo cancellation by semi-blind source separation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full scenario from a config file and write its artifacts.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cancel the echo in a microphone recording given the far-end signal.
    Cancel {
        #[arg(long)]
        farend: PathBuf,
        #[arg(long)]
        mic: PathBuf,
        /// Expansion order.
        #[arg(long, default_value_t = 3)]
        p: usize,
        /// Learning rate.
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 4096)]
        fft: usize,
        #[arg(long, default_value_t = 1024)]
        hop: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Windowed ERLE (mic, estimate) or tERLE (echo, estimate, near end) as CSV.
    Metrics {
        #[arg(long, value_enum)]
        mode: MetricMode,
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_HOP)]
        hop: usize,
    },
    /// Find the clipping threshold that gives a target SDR on a signal.
    CalibrateSdr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: ClipKind,
        /// Target SDR in dB.
        #[arg(long, allow_negative_numbers = true)]
        target: f64,
        /// Shape parameter of the soft model.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Generate an image-method room impulse response.
    Rir {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricMode {
    Erle,
    Terle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClipKind {
    Hard,
    Soft,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors; anything else is a usage error
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = run_scenario(&cfg, &out)?;
            if let Some(m) = &report.metric {
                println!(
                    "{} steady state {:.2} dB (baseline {:.2} dB)",
                    m.name, m.steady_state_db, m.baseline_steady_state_db
                );
            }
            println!(
                "wrote {} artifacts to {}",
                report.artifacts.len(),
                out.display()
            );
        }
        Command::Cancel {
            farend,
            mic,
            p,
            eta,
            fft,
            hop,
            out,
        } => {
            let x = read_wav(&farend)?;
            let y = read_wav(&mic)?;
            let params = SbssParams {
                order: p,
                learning_rate: eta,
                stft: StftConfig::new(fft, hop, Window::default()),
                ..Default::default()
            };
            let (e, diag) = process_stream(&x, &y, &params)?;
            write_wav(&out, &e, WavFormat::Float32)?;
            if diag.skipped_updates > 0 {
                eprintln!("skipped {} singular updates", diag.skipped_updates);
            }
        }
        Command::Metrics {
            mode,
            wavs,
            csv,
            window,
            hop,
        } => {
            let signals = wavs.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
            let series = match (mode, signals.as_slice()) {
                (MetricMode::Erle, [y, e]) => erle(y, e, window, hop)?,
                (MetricMode::Terle, [d, e, s]) => terle(d, e, s, window, hop)?,
                (MetricMode::Erle, _) => {
                    return Err(Error::Config(
                        "erle takes two files: microphone, estimate".into(),
                    ))
                }
                (MetricMode::Terle, _) => {
                    return Err(Error::Config(
                        "terle takes three files: echo, estimate, near end".into(),
                    ))
                }
            };
            series.write_csv(&csv)?;
            println!("steady state {:.2} dB", series.steady_state());
        }
        Command::CalibrateSdr {
            input,
            kind,
            target,
            rho,
        } => {
            let x = read_wav(&input)?;
            let (kind, rho) = match kind {
                ClipKind::Hard if rho.is_some() => {
                    return Err(Error::Config("--rho applies to the soft kind only".into()))
                }
                ClipKind::Hard => (NonlinearityKind::HardClip, None),
                ClipKind::Soft => (
                    NonlinearityKind::SoftSaturation,
                    Some(rho.unwrap_or(DEFAULT_RHO)),
                ),
            };
            let model = calibrate_sdr(&x, kind, target, rho)?;
            println!("x_max = {:.9}", model.x_max().unwrap_or(f64::NAN));
            println!("sdr_db = {:.4}", measure_sdr(&x, &model).db());
        }
        Command::Rir { config, out } => {
            let cfg = RirConfig::load(&config)?;
            let rir = generate_rir(&cfg.spec()?)?;
            write_wav(&out, &rir, WavFormat::Float32)?;
        }
    }
    Ok(())
}
