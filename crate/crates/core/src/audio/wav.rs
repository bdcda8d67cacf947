use std::path::Path;

use super::resample::resample;
use super::{AudioError, Waveform, TARGET_RATE_HZ};

/// Reads a PCM-16 or float-32 WAV file, downmixes to mono by channel
/// averaging and resamples to 16 kHz.
pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    let corrupt = |e: hound::Error| match e {
        hound::Error::Unsupported | hound::Error::TooWide => {
            AudioError::UnsupportedFormat(format!("{}: {e}", path.display()))
        }
        other => AudioError::CorruptFile(format!("{}: {other}", path.display())),
    };
    let mut reader = hound::WavReader::open(path).map_err(corrupt)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(AudioError::CorruptFile(format!("{}: zero channels or sample rate", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(corrupt)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(corrupt)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::CorruptFile(format!("{}: partial frame at end of data", path.display())));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let samples = if spec.sample_rate == TARGET_RATE_HZ {
        mono
    } else {
        resample(&mono, spec.sample_rate, TARGET_RATE_HZ)
    };
    Ok(Waveform { samples, sample_rate_hz: TARGET_RATE_HZ })
}

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate_hz: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| AudioError::Io(format!("{}: {e}", path.display()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        writer.write_sample(pcm16(s)).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

pub fn pcm16(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32767.0).round() as i16
}
