//! Resamples an 8 kHz tone to 16 kHz and reports where its spectral peak lands.
//!
//! cargo run --example resample_audio

use std::f64::consts::PI;

use trait_probe::audio::PolyphaseResampler;

fn main() {
    let tone: Vec<f64> = (0..8000).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / 8000.0).sin()).collect();
    let r = PolyphaseResampler::new(8000, 16_000);
    let up = r.process(&tone);
    println!("{} samples at 8 kHz -> {} samples at 16 kHz", tone.len(), up.len());

    let n = 1024;
    let frame = &up[4000..4000 + n];
    let peak = (0..=n / 2)
        .map(|k| {
            let (re, im) = frame.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, x)| {
                let a = -2.0 * PI * (k * i) as f64 / n as f64;
                (re + x * a.cos(), im + x * a.sin())
            });
            (k, re * re + im * im)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    println!("peak at bin {peak} ({:.1} Hz)", peak as f64 * 16_000.0 / n as f64);
}
