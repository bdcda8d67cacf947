//! Deterministic synthetic corpora with known age and gender cues.
//!
//! Audio is a harmonic source at a law-driven f0 passed through three formant
//! resonators, plus white noise. Optional pseudo-SSL features stand in for
//! extractor output: every layer carries the same class-dependent mean
//! direction, scaled by `decay^layer`, on top of unit Gaussian noise.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_pcm16, AudioError, TARGET_RATE_HZ};
use crate::features::{write_features, FeatureMatrix, FeatureSource, ModelId, Source, StoreError};
use crate::manifest::{DatasetManifest, Gender, ManifestError, Split, UtteranceEntry};

pub const MANIFEST_FILE: &str = "manifest.txt";
/// Pseudo-SSL frame geometry, matching a 20 ms stride over 25 ms windows.
pub const SSL_WINDOW: usize = 400;
pub const SSL_STRIDE: usize = 320;

// Separate key spaces for the per-utterance RNG streams.
const AUDIO_KEY: u64 = 0xA0D1_0000;
const SSL_KEY: u64 = 0x55_1000;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Validation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// `f0 = base - slope * (age - ref_age)`, shifted by `±gender_offset` (male
/// lower) from `gender_min_age` on. Each speaker adds a fixed offset drawn
/// uniformly from `±jitter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Law {
    pub base_hz: f64,
    pub slope_hz_per_year: f64,
    pub ref_age: i32,
    pub gender_offset_hz: f64,
    pub gender_min_age: i32,
    pub jitter_hz: f64,
}

impl Default for F0Law {
    fn default() -> Self {
        F0Law { base_hz: 300.0, slope_hz_per_year: 10.0, ref_age: 4, gender_offset_hz: 15.0, gender_min_age: 10, jitter_hz: 3.0 }
    }
}

impl F0Law {
    /// Nominal f0 before speaker jitter.
    pub fn f0(&self, age: i32, gender: Gender) -> f64 {
        let mut f0 = self.base_hz - self.slope_hz_per_year * (age - self.ref_age) as f64;
        if age >= self.gender_min_age {
            f0 += match gender {
                Gender::Male => -self.gender_offset_hz,
                Gender::Female => self.gender_offset_hz,
            };
        }
        f0
    }
}

/// Pseudo-SSL feature generation. Layer count and width come from `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslSim {
    pub model: ModelId,
    pub signal_decay: f64,
    /// Norm of the age-class mean at layer 0.
    pub age_signal: f64,
    /// Norm of the gender mean at layer 0.
    pub gender_signal: f64,
}

impl SslSim {
    pub fn new(model: ModelId, signal_decay: f64) -> Self {
        SslSim { model, signal_decay, age_signal: 3.0, gender_signal: 2.0 }
    }

    pub fn n_layers(&self) -> usize {
        self.model.spec().n_layers
    }

    pub fn dim(&self) -> usize {
        self.model.spec().dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dataset_name: String,
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    /// Speaker `i` gets `ages[i % ages.len()]`.
    pub ages: Vec<i32>,
    pub female_fraction: f64,
    pub f0: F0Law,
    /// Formants are multiplied by `1 + formant_slope * (12 - age)`.
    pub formant_slope: f64,
    /// Per-speaker relative formant offset, drawn uniformly from `±formant_jitter`.
    pub formant_jitter: f64,
    pub duration_s: (f64, f64),
    pub noise_level: f64,
    /// Share of each age group's speakers held out for test.
    pub test_fraction: f64,
    pub seed: u64,
    pub ssl_sim: Option<SslSim>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            dataset_name: "synth".into(),
            n_speakers: 40,
            utterances_per_speaker: 10,
            ages: (6..=11).collect(),
            female_fraction: 0.5,
            f0: F0Law::default(),
            formant_slope: 0.04,
            formant_jitter: 0.1,
            duration_s: (0.25, 0.4),
            noise_level: 0.02,
            test_fraction: 0.3,
            seed: 0,
            ssl_sim: None,
        }
    }
}

// Adult-ish vowel formants (Hz) and fixed bandwidths.
const VOWELS: [[f64; 3]; 5] =
    [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0], [530.0, 1840.0, 2480.0], [660.0, 1720.0, 2410.0]];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Validation(m));
        if self.ages.is_empty() {
            return bad("no age classes".into());
        }
        for &age in &self.ages {
            for g in [Gender::Male, Gender::Female] {
                let lowest = self.f0.f0(age, g) - self.f0.jitter_hz.abs();
                if lowest <= 0.0 {
                    return bad(format!("f0 law gives {lowest:.1} Hz at age {age}"));
                }
            }
            if self.vocal_tract_factor(age) <= 0.0 {
                return bad(format!("formant factor not positive at age {age}"));
            }
        }
        let (lo, hi) = self.duration_s;
        if !(lo > 0.0 && lo <= hi) || (lo * TARGET_RATE_HZ as f64) < SSL_WINDOW as f64 {
            return bad(format!("duration range {lo}..{hi} s must be ordered and at least 25 ms"));
        }
        if !(0.0..=1.0).contains(&self.female_fraction) || !(0.0..1.0).contains(&self.test_fraction) {
            return bad("female_fraction must be in [0,1] and test_fraction in [0,1)".into());
        }
        if !(0.0..1.0).contains(&self.formant_jitter.abs()) {
            return bad(format!("formant jitter {}", self.formant_jitter));
        }
        if !(self.noise_level >= 0.0) {
            return bad(format!("noise level {}", self.noise_level));
        }
        if let Some(sim) = &self.ssl_sim {
            if !(0.0..=1.0).contains(&sim.signal_decay) {
                return bad(format!("signal decay {} outside [0,1]", sim.signal_decay));
            }
            if !(sim.age_signal.is_finite() && sim.gender_signal.is_finite()) {
                return bad("signal strengths must be finite".into());
            }
        }
        Ok(())
    }

    pub fn vocal_tract_factor(&self, age: i32) -> f64 {
        1.0 + self.formant_slope * (12 - age) as f64
    }

    fn utterance_rng(&self, key: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed ^ key);
        r.set_stream(stream);
        r
    }

    /// The manifest `generate_corpus` would write, without touching disk.
    pub fn plan_manifest(&self) -> Result<DatasetManifest, SynthError> {
        self.validate()?;
        let n_ages = self.ages.len();
        let mut entries = Vec::with_capacity(self.n_speakers * self.utterances_per_speaker);
        for i in 0..self.n_speakers {
            let age_idx = i % n_ages;
            let j = i / n_ages;
            let group = (self.n_speakers - age_idx).div_ceil(n_ages);
            let ff = self.female_fraction;
            let gender = if ((j + 1) as f64 * ff).floor() > (j as f64 * ff).floor() { Gender::Female } else { Gender::Male };
            let n_test = if group < 2 { 0 } else { ((group as f64 * self.test_fraction).round() as usize).clamp(1, group - 1) };
            // alternate the held-out position so both genders reach the test split
            let start = group.saturating_sub(n_test + age_idx % 2);
            let split = if n_test > 0 && (start..start + n_test).contains(&j) { Split::Test } else { Split::Train };
            let speaker_id = format!("{}_s{i:03}", self.dataset_name);
            let mut r = self.utterance_rng(AUDIO_KEY, i as u64);
            for u in 0..self.utterances_per_speaker {
                let utterance_id = format!("{speaker_id}_u{u:02}");
                let (lo, hi) = self.duration_s;
                let d = if hi > lo { r.random_range(lo..hi) } else { lo };
                let n = (d * TARGET_RATE_HZ as f64).round() as usize;
                entries.push(UtteranceEntry {
                    audio_path: format!("wav/{utterance_id}.wav"),
                    utterance_id,
                    speaker_id: speaker_id.clone(),
                    age: self.ages[age_idx],
                    gender,
                    split,
                    duration_s: n as f64 / TARGET_RATE_HZ as f64,
                });
            }
        }
        let manifest = DatasetManifest {
            dataset_name: self.dataset_name.clone(),
            age_min: *self.ages.iter().min().unwrap(),
            age_max: *self.ages.iter().max().unwrap(),
            speaker_disjoint: true,
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Speaker f0 after jitter, as used for every utterance of that speaker.
    pub fn speaker_f0(&self, speaker_index: usize, age: i32, gender: Gender) -> f64 {
        let mut r = self.utterance_rng(AUDIO_KEY ^ 0xF0, speaker_index as u64);
        let j = self.f0.jitter_hz.abs();
        self.f0.f0(age, gender) + if j > 0.0 { r.random_range(-j..=j) } else { 0.0 }
    }

    /// Speaker formant multiplier: the age law times the speaker's offset.
    pub fn speaker_formant_factor(&self, speaker_index: usize, age: i32) -> f64 {
        let mut r = self.utterance_rng(AUDIO_KEY ^ 0xF1, speaker_index as u64);
        let j = self.formant_jitter.abs();
        self.vocal_tract_factor(age) * (1.0 + if j > 0.0 { r.random_range(-j..=j) } else { 0.0 })
    }

    /// Renders one utterance of the planned manifest.
    pub fn render(&self, entry: &UtteranceEntry, speaker_index: usize, utterance_index: usize) -> Vec<f64> {
        let fs = TARGET_RATE_HZ as f64;
        let n = (entry.duration_s * fs).round() as usize;
        let mut r = self.utterance_rng(AUDIO_KEY ^ 0x5A, (speaker_index * 1000 + utterance_index) as u64);
        let f0 = self.speaker_f0(speaker_index, entry.age, entry.gender);

        let n_harm = ((fs * 0.45) / f0).floor() as usize;
        let phases: Vec<f64> = (0..n_harm).map(|_| r.random_range(0.0..2.0 * PI)).collect();
        let mut x: Vec<f64> = (0..n)
            .map(|t| {
                let tt = t as f64 / fs;
                (1..=n_harm).map(|k| (2.0 * PI * k as f64 * f0 * tt + phases[k - 1]).sin() / k as f64).sum()
            })
            .collect();

        let vowel = VOWELS[r.random_range(0..VOWELS.len())];
        let factor = self.speaker_formant_factor(speaker_index, entry.age);
        for (f, bw) in vowel.iter().zip(BANDWIDTHS) {
            let fc = (f * factor).min(0.45 * fs);
            resonate(&mut x, fc, bw, fs);
        }

        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let fade = ((0.01 * fs) as usize).min(n / 2).max(1);
        for (t, v) in x.iter_mut().enumerate() {
            let env = (t.min(n - 1 - t) as f64 / fade as f64).min(1.0);
            let noise: f64 = StandardNormal.sample(&mut r);
            *v = (0.5 * *v / peak * env + self.noise_level * noise).clamp(-1.0, 1.0);
        }
        x
    }
}

/// Two-pole resonator at `fc` Hz with bandwidth `bw`, unit gain at `fc`.
fn resonate(x: &mut [f64], fc: f64, bw: f64, fs: f64) {
    let rad = (-PI * bw / fs).exp();
    let theta = 2.0 * PI * fc / fs;
    let a1 = 2.0 * rad * theta.cos();
    let a2 = -rad * rad;
    let gain = (1.0 - rad) * (1.0 - 2.0 * rad * (2.0 * theta).cos() + rad * rad).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn speaker_index(entry: &UtteranceEntry) -> usize {
    entry.speaker_id.rsplit("_s").next().and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn utterance_index(entry: &UtteranceEntry) -> usize {
    entry.utterance_id.rsplit("_u").next().and_then(|s| s.parse().ok()).unwrap_or(0)
}

/// Writes `<out>/wav/*.wav` and `<out>/manifest.txt`; returns the manifest.
pub fn generate_corpus(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest, SynthError> {
    let manifest = spec.plan_manifest()?;
    let wav_dir = out.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|source| SynthError::Io { path: wav_dir.display().to_string(), source })?;
    manifest.entries.par_iter().try_for_each(|e| -> Result<(), SynthError> {
        let samples = spec.render(e, speaker_index(e), utterance_index(e));
        write_wav_pcm16(&out.join(&e.audio_path), &samples, TARGET_RATE_HZ)?;
        Ok(())
    })?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    log::info!("synthesised {} utterances into {}", manifest.entries.len(), out.display());
    Ok(manifest)
}

/// Pseudo-SSL frame count for an utterance of `n_samples` at 16 kHz.
pub fn ssl_frames(n_samples: usize) -> usize {
    if n_samples < SSL_WINDOW {
        0
    } else {
        (n_samples - SSL_WINDOW) / SSL_STRIDE + 1
    }
}

/// Unit-norm class directions shared by every layer.
fn class_directions(spec: &SynthSpec, sim: &SslSim) -> (HashMap<i32, Array1<f64>>, Array1<f64>) {
    let mut r = spec.utterance_rng(SSL_KEY, u64::MAX);
    let unit = |r: &mut ChaCha8Rng| {
        let v: Array1<f64> = Array1::from_shape_fn(sim.dim(), |_| StandardNormal.sample(r));
        let norm = v.dot(&v).sqrt();
        v / norm
    };
    let mut ages: Vec<i32> = spec.ages.clone();
    ages.sort_unstable();
    ages.dedup();
    let by_age = ages.iter().map(|&a| (a, unit(&mut r))).collect();
    let gender = unit(&mut r);
    (by_age, gender)
}

/// The class-mean vector of an `(age, gender)` cell at `layer`.
pub fn pseudo_ssl_mean(spec: &SynthSpec, sim: &SslSim, age: i32, gender: Gender, layer: i16) -> Array1<f64> {
    let (by_age, g) = class_directions(spec, sim);
    cell_mean(&by_age, &g, sim, age, gender, layer)
}

fn cell_mean(by_age: &HashMap<i32, Array1<f64>>, g: &Array1<f64>, sim: &SslSim, age: i32, gender: Gender, layer: i16) -> Array1<f64> {
    let scale = sim.signal_decay.powi(layer as i32);
    let sign = if gender == Gender::Male { 1.0 } else { -1.0 };
    let u = by_age.get(&age).cloned().unwrap_or_else(|| Array1::zeros(g.len()));
    (u * sim.age_signal + g * (sign * sim.gender_signal)) * scale
}

/// Every utterance's matrix for one layer, in manifest order. Noise is
/// centred within each `(age, gender)` cell so the empirical class means
/// equal the constructed ones exactly.
pub fn pseudo_ssl_layer(spec: &SynthSpec, manifest: &DatasetManifest, layer: i16) -> Result<Vec<FeatureMatrix>, SynthError> {
    let sim = spec.ssl_sim.as_ref().ok_or_else(|| SynthError::Validation("spec has no ssl_sim section".into()))?;
    spec.validate()?;
    let source = Source::Ssl(sim.model);
    if !source.layer_valid(layer) {
        return Err(SynthError::Validation(format!("layer {layer} outside 0..{}", sim.n_layers())));
    }
    let dim = sim.dim();
    let mut noise: Vec<Array2<f64>> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(idx, e)| {
            let frames = ssl_frames((e.duration_s * TARGET_RATE_HZ as f64).round() as usize).max(1);
            let mut r = spec.utterance_rng(SSL_KEY, ((layer as u64) << 32) | idx as u64);
            Array2::from_shape_fn((frames, dim), |_| StandardNormal.sample(&mut r))
        })
        .collect();

    let mut cells: HashMap<(i32, Gender), (Array1<f64>, usize)> = HashMap::new();
    for (e, z) in manifest.entries.iter().zip(&noise) {
        let cell = cells.entry((e.age, e.gender)).or_insert_with(|| (Array1::zeros(dim), 0));
        cell.0 += &z.sum_axis(Axis(0));
        cell.1 += z.nrows();
    }
    let (by_age, g) = class_directions(spec, sim);
    let shift: HashMap<(i32, Gender), Array1<f64>> = cells
        .into_iter()
        .map(|(key, (sum, n))| (key, cell_mean(&by_age, &g, sim, key.0, key.1, layer) - sum / n as f64))
        .collect();
    for (e, z) in manifest.entries.iter().zip(noise.iter_mut()) {
        *z += &shift[&(e.age, e.gender)];
    }
    Ok(manifest
        .entries
        .iter()
        .zip(noise)
        .map(|(e, z)| FeatureMatrix { utterance_id: e.utterance_id.clone(), source, layer, data: z.mapv(|v| v as f32) })
        .collect())
}

/// Writes every layer's `.fmx` files into `out`; returns the file count.
pub fn generate_pseudo_ssl(spec: &SynthSpec, manifest: &DatasetManifest, out: &Path) -> Result<usize, SynthError> {
    let sim = spec.ssl_sim.as_ref().ok_or_else(|| SynthError::Validation("spec has no ssl_sim section".into()))?;
    fs::create_dir_all(out).map_err(|source| SynthError::Io { path: out.display().to_string(), source })?;
    let mut count = 0;
    for layer in 0..sim.n_layers() as i16 {
        for m in pseudo_ssl_layer(spec, manifest, layer)? {
            write_features(&m, out)?;
            count += 1;
        }
    }
    Ok(count)
}

/// Generates pseudo-SSL layers on demand instead of reading files.
#[derive(Debug, Clone)]
pub struct PseudoSslSource {
    pub spec: SynthSpec,
    pub manifest: DatasetManifest,
}

impl FeatureSource for PseudoSslSource {
    fn contains(&self, id: &str, source: Source, layer: i16) -> bool {
        self.spec.ssl_sim.as_ref().map(|s| Source::Ssl(s.model)) == Some(source)
            && source.layer_valid(layer)
            && self.manifest.entries.iter().any(|e| e.utterance_id == id)
    }

    fn load_many(&self, ids: &[&str], source: Source, layer: i16) -> Result<Vec<ndarray::Array2<f32>>, StoreError> {
        let model = self.spec.ssl_sim.as_ref().map(|s| Source::Ssl(s.model));
        if model != Some(source) {
            return Err(StoreError::MissingFeature(ids.iter().map(|s| s.to_string()).collect()));
        }
        let mats = pseudo_ssl_layer(&self.spec, &self.manifest, layer)
            .map_err(|e| StoreError::InvariantViolation(e.to_string()))?;
        let mut by_id: HashMap<String, Array2<f32>> = mats.into_iter().map(|m| (m.utterance_id, m.data)).collect();
        let missing: Vec<String> = ids.iter().filter(|id| !by_id.contains_key(**id)).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(StoreError::MissingFeature(missing));
        }
        Ok(ids.iter().map(|id| by_id.remove(*id).expect("checked above")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { n_speakers: 2, utterances_per_speaker: 2, ages: vec![7, 9], ..SynthSpec::default() }
    }

    #[test]
    fn zero_utterances_is_a_validation_error() {
        let spec = SynthSpec { utterances_per_speaker: 0, ..small() };
        let err = spec.plan_manifest().unwrap_err();
        assert!(err.to_string().contains("zero utterances"), "{err}");
    }

    #[test]
    fn corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&small(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 4);
        for e in &m.entries {
            assert!(dir.path().join(&e.audio_path).is_file());
        }
        let back = crate::manifest::load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn default_corpus_is_balanced_and_disjoint() {
        let m = SynthSpec::default().plan_manifest().unwrap();
        assert_eq!(m.entries.len(), 400);
        assert_eq!(m.n_age_classes(), 6);
        let test: Vec<_> = m.split(Split::Test).collect();
        for age in 6..=11 {
            assert!(test.iter().any(|e| e.age == age), "age {age} missing from test");
        }
        assert!(test.iter().any(|e| e.gender == Gender::Male));
        assert!(test.iter().any(|e| e.gender == Gender::Female));
    }

    #[test]
    fn invalid_laws_rejected() {
        let spec = SynthSpec { ages: vec![40], ..SynthSpec::default() };
        assert!(matches!(spec.validate(), Err(SynthError::Validation(_))));
        let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 1.5)), ..SynthSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn frame_geometry() {
        assert_eq!(ssl_frames(399), 0);
        assert_eq!(ssl_frames(400), 1);
        assert_eq!(ssl_frames(16000), 49);
    }
}
