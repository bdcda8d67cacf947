//! Principal component analysis over feature frames.
//!
//! The covariance is accumulated in f64 from (at most [`MAX_FIT_FRAMES`])
//! training frames and diagonalised by Householder tridiagonalisation
//! followed by implicit QL iterations.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MAX_FIT_FRAMES: usize = 200_000;
pub const PCA_MAGIC: &[u8; 4] = b"TPPC";
pub const PCA_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PcaError {
    #[error("invalid k={k}: must satisfy 1 ≤ k ≤ {max}")]
    InvalidK { k: usize, max: usize },
    #[error("need at least 2 frames to fit, got {0}")]
    TooFewFrames(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("pca file error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k × D`, orthonormal rows in descending eigenvalue order.
    pub basis: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    /// Free-form provenance, e.g. `base-100h L2 pfstar n=41230`.
    pub fitted_on: String,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.basis.nrows()
    }

    /// The leading `k` components of an already-fitted model.
    pub fn truncated(&self, k: usize) -> Result<PcaModel, PcaError> {
        if k == 0 || k > self.k() {
            return Err(PcaError::InvalidK { k, max: self.k() });
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            basis: self.basis.slice(s![..k, ..]).to_owned(),
            eigenvalues: self.eigenvalues.slice(s![..k]).to_owned(),
            fitted_on: self.fitted_on.clone(),
        })
    }

    /// `(frames - mean) · basisᵀ`.
    pub fn project(&self, frames: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        if frames.ncols() != self.dim() {
            return Err(PcaError::ShapeMismatch(format!("frames have {} dims, model has {}", frames.ncols(), self.dim())));
        }
        let centered = &frames - &self.mean;
        Ok(centered.dot(&self.basis.t()))
    }

    pub fn project_f32(&self, frames: ArrayView2<f32>) -> Result<Array2<f32>, PcaError> {
        Ok(self.project(frames.mapv(f64::from).view())?.mapv(|v| v as f32))
    }

    /// `y · basis + mean`.
    pub fn reconstruct(&self, projected: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        if projected.ncols() != self.k() {
            return Err(PcaError::ShapeMismatch(format!("projection has {} dims, model k={}", projected.ncols(), self.k())));
        }
        Ok(projected.dot(&self.basis) + &self.mean)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PCA_MAGIC);
        out.extend_from_slice(&PCA_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        for v in self.mean.iter().chain(self.eigenvalues.iter()).chain(self.basis.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.fitted_on.len() as u32).to_le_bytes());
        out.extend_from_slice(self.fitted_on.as_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PcaError> {
        let bad = |m: &str| PcaError::Format(m.to_string());
        if bytes.len() < 18 || &bytes[..4] != PCA_MAGIC {
            return Err(bad("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(bad("CRC32 mismatch"));
        }
        if u16::from_le_bytes([body[4], body[5]]) != PCA_VERSION {
            return Err(bad("unsupported version"));
        }
        let d = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
        let k = u32::from_le_bytes(body[10..14].try_into().unwrap()) as usize;
        let n_values = d + k + k * d;
        let values_end = 14 + n_values * 8;
        if body.len() < values_end + 4 {
            return Err(bad("truncated"));
        }
        let values: Vec<f64> = body[14..values_end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let name_len = u32::from_le_bytes(body[values_end..values_end + 4].try_into().unwrap()) as usize;
        let name = body.get(values_end + 4..values_end + 4 + name_len).ok_or_else(|| bad("truncated provenance"))?;
        if values_end + 4 + name_len != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(PcaModel {
            mean: Array1::from(values[..d].to_vec()),
            eigenvalues: Array1::from(values[d..d + k].to_vec()),
            basis: Array2::from_shape_vec((k, d), values[d + k..].to_vec()).map_err(|e| PcaError::Format(e.to_string()))?,
            fitted_on: String::from_utf8(name.to_vec()).map_err(|_| bad("provenance is not UTF-8"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PcaError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PcaError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Fits PCA on an `N × D` frame matrix and keeps the top `k` components.
/// Each basis row is sign-fixed so that its largest-magnitude entry is positive.
pub fn fit_pca(frames: ArrayView2<f64>, k: usize) -> Result<PcaModel, PcaError> {
    let (n, d) = frames.dim();
    if n < 2 {
        return Err(PcaError::TooFewFrames(n));
    }
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(PcaError::InvalidK { k, max: max_k });
    }
    let mean = frames.mean_axis(Axis(0)).expect("n ≥ 2");
    let centered = &frames - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (values, vectors) = symmetric_eigen(cov)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut basis = Array2::zeros((k, d));
    let mut eigenvalues = Array1::zeros(k);
    for (row, &col) in order.iter().take(k).enumerate() {
        let v = vectors.column(col);
        let pivot = v.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.row_mut(row).assign(&v.mapv(|x| x * sign));
        // rounding can leave tiny negatives on rank-deficient data
        eigenvalues[row] = values[col].max(0.0);
    }
    Ok(PcaModel { mean, basis, eigenvalues, fitted_on: format!("n={n}") })
}

/// Fits on f32 feature matrices, subsampling frames uniformly at random
/// (seeded) down to [`MAX_FIT_FRAMES`].
pub fn fit_pca_on_matrices(items: &[ArrayView2<f32>], k: usize, seed: u64, fitted_on: &str) -> Result<PcaModel, PcaError> {
    let d = items.first().map_or(0, |m| m.ncols());
    if let Some(bad) = items.iter().find(|m| m.ncols() != d) {
        return Err(PcaError::ShapeMismatch(format!("mixed feature dims {d} and {}", bad.ncols())));
    }
    let total: usize = items.iter().map(|m| m.nrows()).sum();
    let mut rows: Vec<usize> = if total > MAX_FIT_FRAMES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, total, MAX_FIT_FRAMES).into_vec()
    } else {
        (0..total).collect()
    };
    rows.sort_unstable();
    let mut stacked = Array2::<f64>::zeros((rows.len(), d));
    let mut offsets = Vec::with_capacity(items.len());
    let mut acc = 0;
    for m in items {
        offsets.push(acc);
        acc += m.nrows();
    }
    for (out_row, &r) in rows.iter().enumerate() {
        let item = offsets.partition_point(|&o| o <= r) - 1;
        let src = items[item].row(r - offsets[item]);
        stacked.row_mut(out_row).assign(&src.mapv(f64::from));
    }
    let mut model = fit_pca(stacked.view(), k)?;
    model.fitted_on = format!("{fitted_on} n={}", rows.len());
    Ok(model)
}

/// Reduced dimensions for a sweep: 512 down to 64 in steps of 64, then 32,
/// keeping only values ≤ `d` (with a warning when `d` < 512).
pub fn pca_sweep_dims(d: usize) -> Vec<usize> {
    let full: Vec<usize> = (1..=8).rev().map(|i| i * 64).chain(std::iter::once(32)).collect();
    if d < 512 {
        let kept: Vec<usize> = full.into_iter().filter(|&k| k <= d).collect();
        log::warn!("feature dimension {d} < 512; PCA sweep truncated to {kept:?}");
        return kept;
    }
    full
}

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues and the
/// matrix whose columns are the corresponding unit eigenvectors.
pub fn symmetric_eigen(a: Array2<f64>) -> Result<(Vec<f64>, Array2<f64>), PcaError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    let mut v = a;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return Ok((d, v));
    }
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;
    Ok((d, v))
}

/// Householder reduction to tridiagonal form; `v` is overwritten with the
/// accumulated orthogonal transform, `d`/`e` receive the diagonal and
/// sub-diagonal.
fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal matrix, accumulating into `v`.
fn tridiagonal_ql(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<(), PcaError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(PcaError::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (mut left, mut right) = v.multi_slice_mut((s![.., i], s![.., i + 1]));
                    for k in 0..n {
                        let hk = right[k];
                        right[k] = s * left[k] + c * hk;
                        left[k] = c * left[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
