//! Nonlinear acoustic echo cancellation by semi-blind source separation.
//!
//! The far-end signal is expanded into odd-power basis signals
//! `x, x^3, ..., x^(2p-1)` which act as known reference sources. A per-bin
//! constrained demixing matrix, adapted online with a scaled natural
//! gradient, extracts the near-end signal from the microphone in the STFT
//! domain (see [`sbss`]).
//!
//! The crate also contains the simulation pieces needed to evaluate it:
//! loudspeaker nonlinearities ([`nonlinear`]), image-method rooms
//! ([`room`]), ERLE metrics ([`metrics`]) and a scenario runner
//! ([`harness`]).

pub mod error;
pub mod harness;
pub mod metrics;
pub mod nonlinear;
pub mod room;
pub mod sbss;
pub mod signal;

pub use error::{Error, Result};
pub use metrics::{erle, measure_esr, terle, MetricSeries};
pub use nonlinear::{
    apply_nonlinearity, calibrate_sdr, expand_basis, measure_sdr, BasisStack, NonlinearModel,
    NonlinearityKind, Sdr,
};
pub use room::{
    convolve, generate_rir, synthesize_mixture, MixtureScenario, RoomSpec, WallReflection,
};
pub use sbss::{
    process_spectra, process_stream, score, DemixState, EstimateFrame, SbssCanceller, SbssParams,
    ScaleFactor, SpectralFrameVector, StreamDiagnostics,
};
pub use signal::{
    istft, read_wav, stft, write_wav, Spectrogram, StftConfig, TimeSignal, WavFormat, Window,
};
