use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::TimeSignal;
use crate::error::{Error, Result};

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    /// 16-bit signed PCM, samples scaled by 32768 and clipped.
    Pcm16,
    /// 32-bit IEEE float.
    #[default]
    Float32,
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Reads the first channel of a WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<TimeSignal> {
    read_wav_channel(path, 0)
}

/// Reads one channel of a PCM16 or float32 WAV file. Integer samples are
/// normalized so that `i16::MIN` maps to -1.
pub fn read_wav_channel(path: impl AsRef<Path>, channel: usize) -> Result<TimeSignal> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: format!("channel {channel} requested but file has {channels}"),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::Wav {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported sample format {fmt:?} with {bits} bits per sample \
                     (expected 16-bit PCM or 32-bit float)"
                ),
            })
        }
    };
    let samples = interleaved
        .into_iter()
        .skip(channel)
        .step_by(channels)
        .collect();
    TimeSignal::new(samples, spec.sample_rate).map_err(|e| Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes a mono WAV file.
pub fn write_wav(path: impl AsRef<Path>, signal: &TimeSignal, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in signal.samples() {
        let res = match format {
            WavFormat::Pcm16 => {
                let v = (s * 32768.0)
                    .round()
                    .clamp(i16::MIN as f64, i16::MAX as f64);
                writer.write_sample(v as i16)
            }
            WavFormat::Float32 => writer.write_sample(s as f32),
        };
        res.map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}
