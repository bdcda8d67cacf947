//! 26-dimensional MFCC baseline features.
//!
//! Pipeline: pre-emphasis → 25 ms framing at 10 ms hop → Hamming window →
//! 512-point power spectrum → 40 triangular HTK-mel filters over 0–8 kHz →
//! natural log with a floor → orthonormal DCT-II, coefficients 0..26.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_wav, AudioError, Waveform, TARGET_RATE_HZ};
use crate::features::{FeatureMatrix, Source};
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mel_filters: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            n_coeffs: 26,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_mel_filters: 40,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
            f_min_hz: 0.0,
            f_max_hz: 8000.0,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_len_ms * TARGET_RATE_HZ as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * TARGET_RATE_HZ as f64 / 1000.0).round() as usize
    }

    /// `floor((len - frame_len) / hop) + 1`, or 0 when shorter than one frame.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len() {
            0
        } else {
            (n_samples - self.frame_len()) / self.hop_len() + 1
        }
    }

    fn validate(&self) -> Result<(), AudioError> {
        let ok = self.n_coeffs >= 1
            && self.n_coeffs <= self.n_mel_filters
            && self.frame_len() >= 1
            && self.hop_len() >= 1
            && self.n_fft >= self.frame_len()
            && self.log_floor > 0.0
            && self.f_min_hz >= 0.0
            && self.f_max_hz > self.f_min_hz
            && self.f_max_hz <= TARGET_RATE_HZ as f64 / 2.0;
        if ok {
            Ok(())
        } else {
            Err(AudioError::InvalidConfig(format!("{self:?}")))
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evaluated at each FFT bin's centre frequency,
/// shape `n_mel_filters × (n_fft/2 + 1)`, unit peak height.
pub fn mel_filterbank(cfg: &MfccConfig) -> Array2<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz));
    let edges: Vec<f64> = (0..cfg.n_mel_filters + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mel_filters + 1) as f64))
        .collect();
    Array2::from_shape_fn((cfg.n_mel_filters, n_bins), |(m, k)| {
        let f = k as f64 * TARGET_RATE_HZ as f64 / cfg.n_fft as f64;
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        if f > left && f <= centre {
            (f - left) / (centre - left)
        } else if f > centre && f < right {
            (right - f) / (right - centre)
        } else {
            0.0
        }
    })
}

/// Orthonormal DCT-II basis, shape `n_out × n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_out, n_in), |(k, n)| {
        let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
        scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos()
    })
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()).collect()
}

/// Reusable MFCC extractor with the filterbank, DCT and FFT plan precomputed.
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self, AudioError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(MfccExtractor {
            window: hamming(cfg.frame_len()),
            filterbank: mel_filterbank(&cfg),
            dct: dct_matrix(cfg.n_coeffs, cfg.n_mel_filters),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// MFCC matrix in f64, shape `frames × n_coeffs`.
    pub fn compute(&self, samples: &[f64]) -> Result<Array2<f64>, AudioError> {
        let cfg = &self.cfg;
        let frame_len = cfg.frame_len();
        let n_frames = cfg.n_frames(samples.len());
        if n_frames == 0 {
            return Err(AudioError::TooShort { samples: samples.len(), needed: frame_len });
        }
        let mut emphasized = Vec::with_capacity(samples.len());
        emphasized.push(samples[0]);
        emphasized.extend(samples.windows(2).map(|w| w[1] - cfg.pre_emphasis * w[0]));

        let n_bins = cfg.n_fft / 2 + 1;
        let mut out = Array2::zeros((n_frames, cfg.n_coeffs));
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut power = vec![0.0; n_bins];
        let mut log_mel = vec![0.0; cfg.n_mel_filters];
        for f in 0..n_frames {
            let start = f * cfg.hop_len();
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (s, w)) in emphasized[start..start + frame_len].iter().zip(&self.window).enumerate() {
                buf[i].re = s * w;
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, lm) in log_mel.iter_mut().enumerate() {
                let energy: f64 = self.filterbank.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
                *lm = energy.max(cfg.log_floor).ln();
            }
            for k in 0..cfg.n_coeffs {
                out[[f, k]] = self.dct.row(k).iter().zip(&log_mel).map(|(d, l)| d * l).sum();
            }
        }
        Ok(out)
    }

    pub fn extract(&self, utterance_id: &str, w: &Waveform) -> Result<FeatureMatrix, AudioError> {
        if w.sample_rate_hz != TARGET_RATE_HZ {
            return Err(AudioError::UnsupportedFormat(format!(
                "MFCC input must be {TARGET_RATE_HZ} Hz, got {}",
                w.sample_rate_hz
            )));
        }
        let m = self.compute(&w.samples)?;
        Ok(FeatureMatrix {
            utterance_id: utterance_id.to_string(),
            source: Source::Mfcc,
            layer: -1,
            data: m.mapv(|v| v as f32),
        })
    }
}

/// One-shot convenience wrapper around [`MfccExtractor`].
pub fn mfcc(utterance_id: &str, w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix, AudioError> {
    MfccExtractor::new(cfg.clone())?.extract(utterance_id, w)
}

/// MFCCs for every manifest utterance, in manifest order. Audio paths are
/// resolved against `root`.
pub fn mfcc_for_manifest(manifest: &DatasetManifest, root: &Path, cfg: &MfccConfig) -> Result<Vec<FeatureMatrix>, AudioError> {
    let extractor = MfccExtractor::new(cfg.clone())?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let w = read_wav(&root.join(&e.audio_path))?;
            extractor.extract(&e.utterance_id, &w)
        })
        .collect()
}
