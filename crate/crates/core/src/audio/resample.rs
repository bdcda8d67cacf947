//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

pub const TAPS_PER_PHASE: usize = 64;
pub const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Precomputed filter bank: one set of taps per output phase.
#[derive(Debug, Clone)]
pub struct PolyphaseResampler {
    up: usize,
    down: usize,
    taps: Vec<[f64; TAPS_PER_PHASE]>,
}

impl PolyphaseResampler {
    pub fn new(from_hz: u32, to_hz: u32) -> Self {
        assert!(from_hz > 0 && to_hz > 0, "sample rates must be positive");
        let g = gcd(from_hz as u64, to_hz as u64);
        let up = (to_hz as u64 / g) as usize;
        let down = (from_hz as u64 / g) as usize;
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half = (TAPS_PER_PHASE / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let taps = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut row = [0.0; TAPS_PER_PHASE];
                for (j, w) in row.iter_mut().enumerate() {
                    let tau = frac + (half - 1.0) - j as f64;
                    let x = tau / half;
                    let window = if x.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
                    } else {
                        0.0
                    };
                    *w = cutoff * sinc(cutoff * tau) * window;
                }
                let dc: f64 = row.iter().sum();
                row.iter_mut().for_each(|w| *w /= dc);
                row
            })
            .collect();
        PolyphaseResampler { up, down, taps }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = self.output_len(input.len());
        let half = TAPS_PER_PHASE / 2;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out {
            let pos = n * self.down;
            let base = (pos / self.up) as isize;
            let taps = &self.taps[pos % self.up];
            let start = base - (half as isize - 1);
            let mut acc = 0.0;
            for (j, &w) in taps.iter().enumerate() {
                let i = start + j as isize;
                if i >= 0 && (i as usize) < input.len() {
                    acc += w * input[i as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

pub fn resample(input: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz {
        return input.to_vec();
    }
    PolyphaseResampler::new(from_hz, to_hz).process(input)
}
