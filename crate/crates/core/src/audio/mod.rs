//! Audio ingestion and the MFCC baseline.

pub mod mfcc;
pub mod resample;
pub mod wav;

pub use mfcc::{mfcc, mfcc_for_manifest, MfccConfig, MfccExtractor};
pub use resample::{resample, PolyphaseResampler};
pub use wav::{read_wav, write_wav_pcm16};

/// All audio is brought to this rate on ingestion.
pub const TARGET_RATE_HZ: u32 = 16_000;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("input too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
    #[error("audio io error: {0}")]
    Io(String),
}

/// Mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}
