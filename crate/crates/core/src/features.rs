//! Per-utterance, per-layer feature matrices and the `.fmx` v1 interchange format.
//!
//! Header layout (little-endian, 64 bytes):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `FMX1`                           |
//! | 4      | 2    | version (1)                            |
//! | 6      | 1    | source (0 = mfcc, 1 = ssl)             |
//! | 7      | 1    | model id (0..=3, 255 = none)           |
//! | 8      | 2    | layer (i16, -1 for mfcc)               |
//! | 10     | 2    | utterance id byte length               |
//! | 12     | 4    | frames                                 |
//! | 16     | 4    | dims                                   |
//! | 20     | 44   | zero padding                           |
//!
//! The header is followed by the UTF-8 utterance id and then
//! `frames * dims` f32 values in row-major order.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::manifest::{DatasetManifest, Split};

pub const FMX_MAGIC: &[u8; 4] = b"FMX1";
pub const FMX_VERSION: u16 = 1;
pub const FMX_HEADER_LEN: usize = 64;
pub const MFCC_DIMS: usize = 26;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: String, found: [u8; 4] },
    #[error("{path}: unsupported version {found} (expected {FMX_VERSION})")]
    VersionMismatch { path: String, found: u16 },
    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    TruncatedPayload { path: String, expected: usize, actual: usize },
    #[error("{path}: {extra} unexpected trailing bytes")]
    TrailingBytes { path: String, extra: usize },
    #[error("{path}: non-finite value at frame {frame}, dim {dim}")]
    NonFiniteValue { path: String, frame: usize, dim: usize },
    #[error("missing features for {} utterance(s): {}", .0.len(), .0.join(", "))]
    MissingFeature(Vec<String>),
}

/// The four pretrained model variants probed by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "base-100h")]
    Base100h,
    #[serde(rename = "base-960h")]
    Base960h,
    #[serde(rename = "large-960h-lv60")]
    Large960hLv60,
    #[serde(rename = "large-960h-lv60-self")]
    Large960hLv60Self,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub n_layers: usize,
    pub dim: usize,
    pub params_m: u32,
}

pub const MODEL_SPECS: [ModelSpec; 4] = [
    ModelSpec { model_id: ModelId::Base100h, n_layers: 13, dim: 768, params_m: 95 },
    ModelSpec { model_id: ModelId::Base960h, n_layers: 13, dim: 768, params_m: 95 },
    ModelSpec { model_id: ModelId::Large960hLv60, n_layers: 25, dim: 1024, params_m: 317 },
    ModelSpec { model_id: ModelId::Large960hLv60Self, n_layers: 25, dim: 1024, params_m: 317 },
];

impl ModelId {
    pub const ALL: [ModelId; 4] =
        [ModelId::Base100h, ModelId::Base960h, ModelId::Large960hLv60, ModelId::Large960hLv60Self];

    pub fn spec(self) -> ModelSpec {
        MODEL_SPECS[self.code() as usize]
    }

    pub fn code(self) -> u8 {
        match self {
            ModelId::Base100h => 0,
            ModelId::Base960h => 1,
            ModelId::Large960hLv60 => 2,
            ModelId::Large960hLv60Self => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Base100h => "base-100h",
            ModelId::Base960h => "base-960h",
            ModelId::Large960hLv60 => "large-960h-lv60",
            ModelId::Large960hLv60Self => "large-960h-lv60-self",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model '{s}' (expected one of base-100h, base-960h, large-960h-lv60, large-960h-lv60-self)"))
    }
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Mfcc,
    Ssl(ModelId),
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Mfcc => "mfcc",
            Source::Ssl(m) => m.name(),
        }
    }

    pub fn dims(self) -> usize {
        match self {
            Source::Mfcc => MFCC_DIMS,
            Source::Ssl(m) => m.spec().dim,
        }
    }

    /// Valid layer indices: `-1` for MFCC, `0..n_layers` for SSL models.
    pub fn layer_valid(self, layer: i16) -> bool {
        match self {
            Source::Mfcc => layer == -1,
            Source::Ssl(m) => layer >= 0 && (layer as usize) < m.spec().n_layers,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mfcc" {
            Ok(Source::Mfcc)
        } else {
            s.parse().map(Source::Ssl)
        }
    }
}

/// One utterance's frames × dims feature matrix plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    pub source: Source,
    pub layer: i16,
    pub data: Array2<f32>,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::InvariantViolation(m));
        if self.utterance_id.is_empty() || self.utterance_id.len() > u16::MAX as usize {
            return bad(format!("utterance id length {} out of range", self.utterance_id.len()));
        }
        if self.utterance_id.contains(['/', '\\', '\0']) {
            return bad(format!("utterance id '{}' contains a path separator", self.utterance_id));
        }
        if self.frames() == 0 {
            return bad("frames must be ≥ 1".into());
        }
        if self.dims() != self.source.dims() {
            return bad(format!("{} features must have {} dims, got {}", self.source, self.source.dims(), self.dims()));
        }
        if !self.source.layer_valid(self.layer) {
            return bad(format!("layer {} out of range for {}", self.layer, self.source));
        }
        if let Some(((f, d), _)) = self.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("non-finite value at frame {f}, dim {d}"));
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        feature_file_name(&self.utterance_id, self.source, self.layer)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        self.validate()?;
        let id = self.utterance_id.as_bytes();
        let mut out = Vec::with_capacity(FMX_HEADER_LEN + id.len() + self.data.len() * 4);
        out.extend_from_slice(FMX_MAGIC);
        out.extend_from_slice(&FMX_VERSION.to_le_bytes());
        let (src, model) = match self.source {
            Source::Mfcc => (0u8, 255u8),
            Source::Ssl(m) => (1u8, m.code()),
        };
        out.push(src);
        out.push(model);
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims() as u32).to_le_bytes());
        out.resize(FMX_HEADER_LEN, 0);
        out.extend_from_slice(id);
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, StoreError> {
        let path = origin.to_string();
        if bytes.len() < FMX_HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != FMX_MAGIC {
                return Err(StoreError::BadMagic { path, found: bytes[..4].try_into().unwrap() });
            }
            return Err(StoreError::TruncatedPayload { path, expected: FMX_HEADER_LEN, actual: bytes.len() });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != FMX_MAGIC {
            return Err(StoreError::BadMagic { path, found: magic });
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != FMX_VERSION {
            return Err(StoreError::VersionMismatch { path, found: version });
        }
        let source = match (bytes[6], bytes[7]) {
            (0, 255) => Source::Mfcc,
            (1, code) => Source::Ssl(ModelId::from_code(code).ok_or_else(|| {
                StoreError::InvariantViolation(format!("{path}: unknown model code {code}"))
            })?),
            (s, m) => return Err(StoreError::InvariantViolation(format!("{path}: bad source/model byte pair ({s}, {m})"))),
        };
        let layer = i16::from_le_bytes([bytes[8], bytes[9]]);
        let id_len = u16_at(10) as usize;
        let frames = u32_at(12) as usize;
        let dims = u32_at(16) as usize;
        let expected = FMX_HEADER_LEN + id_len + frames * dims * 4;
        if bytes.len() < expected {
            return Err(StoreError::TruncatedPayload { path, expected, actual: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(StoreError::TrailingBytes { path, extra: bytes.len() - expected });
        }
        let utterance_id = std::str::from_utf8(&bytes[FMX_HEADER_LEN..FMX_HEADER_LEN + id_len])
            .map_err(|e| StoreError::InvariantViolation(format!("{path}: utterance id is not UTF-8: {e}")))?
            .to_string();
        let payload = &bytes[FMX_HEADER_LEN + id_len..];
        let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFiniteValue { path, frame: i / dims.max(1), dim: i % dims.max(1) });
        }
        let data = Array2::from_shape_vec((frames, dims), values)
            .map_err(|e| StoreError::InvariantViolation(format!("{path}: {e}")))?;
        let m = FeatureMatrix { utterance_id, source, layer, data };
        m.validate()
            .map_err(|e| StoreError::InvariantViolation(format!("{path}: {e}")))?;
        Ok(m)
    }
}

pub fn feature_file_name(utterance_id: &str, source: Source, layer: i16) -> String {
    format!("{utterance_id}.{}.L{layer}.fmx", source.name())
}

/// Writes `<dir>/<utt_id>.<model|mfcc>.L<layer>.fmx` and returns its path.
pub fn write_features(matrix: &FeatureMatrix, dir: &Path) -> Result<PathBuf, StoreError> {
    let bytes = matrix.to_bytes()?;
    let path = dir.join(matrix.file_name());
    fs::write(&path, bytes).map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
    FeatureMatrix::from_bytes(&bytes, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreFilter {
    pub source: Source,
    pub layer: i16,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureHandle {
    pub utterance_id: String,
    pub path: PathBuf,
}

impl FeatureHandle {
    pub fn load(&self) -> Result<FeatureMatrix, StoreError> {
        read_features(&self.path)
    }
}

/// Resolves the stored file for every manifest utterance matching `filter`,
/// ordered by byte-wise utterance id. Files not named by the manifest are ignored.
pub fn scan_store(dir: &Path, manifest: &DatasetManifest, filter: StoreFilter) -> Result<Vec<FeatureHandle>, StoreError> {
    if !dir.is_dir() {
        return Err(StoreError::Io {
            path: dir.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "feature directory does not exist"),
        });
    }
    let mut ids: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| filter.split.is_none_or(|s| e.split == s))
        .map(|e| e.utterance_id.as_str())
        .collect();
    ids.sort_unstable_by(|a, b| a.as_bytes().cmp(b.as_bytes()));

    let mut handles = Vec::with_capacity(ids.len());
    let mut missing = Vec::new();
    for id in ids {
        let path = dir.join(feature_file_name(id, filter.source, filter.layer));
        if path.is_file() {
            handles.push(FeatureHandle { utterance_id: id.to_string(), path });
        } else {
            missing.push(id.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(StoreError::MissingFeature(missing));
    }
    Ok(handles)
}

/// Anything that can hand out feature matrices by utterance id.
pub trait FeatureSource: Sync {
    /// Matrices for `ids`, in the order given. Fails with
    /// [`StoreError::MissingFeature`] naming every absent id.
    fn load_many(&self, ids: &[&str], source: Source, layer: i16) -> Result<Vec<Array2<f32>>, StoreError>;

    /// Whether `load_many` would find this matrix, without loading it.
    fn contains(&self, id: &str, source: Source, layer: i16) -> bool;

    /// Every id in `ids` that is absent, in the order given.
    fn missing(&self, ids: &[&str], source: Source, layer: i16) -> Vec<String> {
        ids.iter().filter(|id| !self.contains(id, source, layer)).map(|id| id.to_string()).collect()
    }
}

/// A flat directory of `.fmx` files.
#[derive(Debug, Clone)]
pub struct DiskStore {
    pub dir: PathBuf,
}

impl DiskStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskStore { dir: dir.into() }
    }
}

impl FeatureSource for DiskStore {
    fn contains(&self, id: &str, source: Source, layer: i16) -> bool {
        self.dir.join(feature_file_name(id, source, layer)).is_file()
    }

    fn load_many(&self, ids: &[&str], source: Source, layer: i16) -> Result<Vec<Array2<f32>>, StoreError> {
        let paths: Vec<PathBuf> = ids.iter().map(|id| self.dir.join(feature_file_name(id, source, layer))).collect();
        let missing = self.missing(ids, source, layer);
        if !missing.is_empty() {
            return Err(StoreError::MissingFeature(missing));
        }
        ids.iter()
            .zip(&paths)
            .map(|(id, path)| {
                let m = read_features(path)?;
                if m.utterance_id != *id || m.source != source || m.layer != layer {
                    return Err(StoreError::InvariantViolation(format!(
                        "{}: header names {} {} L{}",
                        path.display(),
                        m.utterance_id,
                        m.source.name(),
                        m.layer
                    )));
                }
                Ok(m.data)
            })
            .collect()
    }
}

/// Feature matrices held in memory, keyed like the on-disk store.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    items: HashMap<(String, Source, i16), Array2<f32>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and stores `m`, replacing any previous entry.
    pub fn insert(&mut self, m: FeatureMatrix) -> Result<(), StoreError> {
        m.validate()?;
        self.items.insert((m.utterance_id, m.source, m.layer), m.data);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl FeatureSource for MemoryStore {
    fn contains(&self, id: &str, source: Source, layer: i16) -> bool {
        self.items.contains_key(&(id.to_string(), source, layer))
    }

    fn load_many(&self, ids: &[&str], source: Source, layer: i16) -> Result<Vec<Array2<f32>>, StoreError> {
        let missing = self.missing(ids, source, layer);
        if !missing.is_empty() {
            return Err(StoreError::MissingFeature(missing));
        }
        Ok(ids.iter().map(|id| self.items[&(id.to_string(), source, layer)].clone()).collect())
    }
}

/// Sends MFCC requests to one source and SSL requests to another.
pub struct RoutedSource<'a> {
    pub mfcc: &'a dyn FeatureSource,
    pub ssl: &'a dyn FeatureSource,
}

impl RoutedSource<'_> {
    fn pick(&self, source: Source) -> &dyn FeatureSource {
        match source {
            Source::Mfcc => self.mfcc,
            Source::Ssl(_) => self.ssl,
        }
    }
}

impl FeatureSource for RoutedSource<'_> {
    fn contains(&self, id: &str, source: Source, layer: i16) -> bool {
        self.pick(source).contains(id, source, layer)
    }

    fn load_many(&self, ids: &[&str], source: Source, layer: i16) -> Result<Vec<Array2<f32>>, StoreError> {
        self.pick(source).load_many(ids, source, layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mfcc_matrix(frames: usize) -> FeatureMatrix {
        FeatureMatrix {
            utterance_id: "spk01_u003".into(),
            source: Source::Mfcc,
            layer: -1,
            data: Array2::from_shape_fn((frames, MFCC_DIMS), |(i, j)| (i * 31 + j) as f32 * 0.25 - 7.0),
        }
    }

    #[test]
    fn model_table_matches_inventory() {
        let rows: Vec<_> = MODEL_SPECS.iter().map(|s| (s.model_id.name(), s.n_layers, s.dim, s.params_m)).collect();
        assert_eq!(
            rows,
            vec![
                ("base-100h", 13, 768, 95),
                ("base-960h", 13, 768, 95),
                ("large-960h-lv60", 25, 1024, 317),
                ("large-960h-lv60-self", 25, 1024, 317),
            ]
        );
        for m in ModelId::ALL {
            assert_eq!(m.name().parse::<ModelId>().unwrap(), m);
            assert_eq!(ModelId::from_code(m.code()), Some(m));
        }
    }

    #[test]
    fn zero_frames_rejected() {
        let m = mfcc_matrix(0);
        let err = m.to_bytes().unwrap_err();
        assert!(err.to_string().contains("frames must be ≥ 1"), "{err}");
    }

    #[test]
    fn file_size_is_header_plus_id_plus_payload() {
        let dir = tempfile::tempdir().unwrap();
        let m = mfcc_matrix(98);
        let path = write_features(&m, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "spk01_u003.mfcc.L-1.fmx");
        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 64 + "spk01_u003".len() + 98 * 26 * 4);
        assert_eq!(read_features(&path).unwrap(), m);
    }

    #[test]
    fn ssl_dims_and_layer_checked() {
        let mut m = FeatureMatrix {
            utterance_id: "u".into(),
            source: Source::Ssl(ModelId::Base100h),
            layer: 13,
            data: Array2::zeros((3, 768)),
        };
        assert!(m.validate().is_err());
        m.layer = 12;
        m.validate().unwrap();
        m.data = Array2::zeros((3, 1024));
        assert!(m.validate().is_err());
        m.source = Source::Ssl(ModelId::Large960hLv60Self);
        m.layer = 24;
        m.validate().unwrap();
    }

    #[test]
    fn reader_errors() {
        let good = mfcc_matrix(4).to_bytes().unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(FeatureMatrix::from_bytes(&bad, "f"), Err(StoreError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(FeatureMatrix::from_bytes(&bad, "f"), Err(StoreError::VersionMismatch { found: 2, .. })));

        let cut = &good[..good.len() - 5];
        match FeatureMatrix::from_bytes(cut, "f") {
            Err(StoreError::TruncatedPayload { expected, actual, .. }) => {
                assert_eq!(expected, good.len());
                assert_eq!(actual, good.len() - 5);
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(FeatureMatrix::from_bytes(&bad, "f"), Err(StoreError::NonFiniteValue { frame: 3, dim: 25, .. })));
    }
}
