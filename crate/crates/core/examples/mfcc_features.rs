//! Computes the 26-coefficient MFCC baseline for a WAV file, or for a
//! synthetic vowel when no file is given.
//!
//! cargo run --release --example mfcc_features -- [input.wav]

use std::path::Path;

use trait_probe::audio::{mfcc, read_wav, MfccConfig, Waveform};
use trait_probe::manifest::{Gender, Split, UtteranceEntry};
use trait_probe::synth::SynthSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wave = match std::env::args().nth(1) {
        Some(path) => read_wav(Path::new(&path))?,
        None => {
            let entry = UtteranceEntry {
                utterance_id: "demo".into(),
                speaker_id: "spk".into(),
                audio_path: "demo.wav".into(),
                age: 8,
                gender: Gender::Female,
                split: Split::Train,
                duration_s: 1.0,
            };
            Waveform { samples: SynthSpec::default().render(&entry, 0, 0), sample_rate_hz: 16_000 }
        }
    };
    let cfg = MfccConfig::default();
    let m = mfcc("demo", &wave, &cfg)?;
    println!("{:.2} s of audio -> {} frames x {} coefficients", wave.duration_s(), m.frames(), m.dims());
    let mean: Vec<String> = m.data.mean_axis(ndarray::Axis(0)).unwrap().iter().take(6).map(|v| format!("{v:.2}")).collect();
    println!("mean of the first 6 coefficients: [{}]", mean.join(", "));
    Ok(())
}
