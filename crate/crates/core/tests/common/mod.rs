//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trait_probe::nn::ClassifierModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

// ---------------------------------------------------------------------------
// MFCC: same pipeline with a naive O(N²) DFT and its own filterbank/DCT code.
// ---------------------------------------------------------------------------

pub fn naive_mfcc(samples: &[f64]) -> Vec<Vec<f64>> {
    const SR: f64 = 16000.0;
    const FRAME: usize = 400;
    const HOP: usize = 160;
    const NFFT: usize = 512;
    const NMEL: usize = 40;
    const NCEP: usize = 26;

    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv_mel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let mel_hi = mel(8000.0);
    let points: Vec<f64> = (0..NMEL + 2).map(|i| inv_mel(mel_hi * i as f64 / (NMEL + 1) as f64)).collect();

    let mut pre = vec![samples[0]];
    for n in 1..samples.len() {
        pre.push(samples[n] - 0.97 * samples[n - 1]);
    }
    let n_frames = (samples.len() - FRAME) / HOP + 1;
    let mut out = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let frame: Vec<f64> = (0..FRAME)
            .map(|n| pre[f * HOP + n] * (0.54 - 0.46 * (2.0 * PI * n as f64 / (FRAME - 1) as f64).cos()))
            .collect();
        let power: Vec<f64> = (0..=NFFT / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * n) as f64 / NFFT as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect();
        let logmel: Vec<f64> = (0..NMEL)
            .map(|m| {
                let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
                let mut e = 0.0;
                for (k, p) in power.iter().enumerate() {
                    let fk = k as f64 * SR / NFFT as f64;
                    let w = if fk > l && fk <= c {
                        (fk - l) / (c - l)
                    } else if fk > c && fk < r {
                        (r - fk) / (r - c)
                    } else {
                        0.0
                    };
                    e += w * p;
                }
                e.max(1e-10).ln()
            })
            .collect();
        let ceps: Vec<f64> = (0..NCEP)
            .map(|k| {
                let s: f64 = logmel
                    .iter()
                    .enumerate()
                    .map(|(n, v)| v * (PI * k as f64 * (2 * n + 1) as f64 / (2 * NMEL) as f64).cos())
                    .sum();
                s * if k == 0 { (1.0 / NMEL as f64).sqrt() } else { (2.0 / NMEL as f64).sqrt() }
            })
            .collect();
        out.push(ceps);
    }
    out
}

// ---------------------------------------------------------------------------
// CNN probe: straight-line scalar loops over the model's parameters.
// ---------------------------------------------------------------------------

/// Scalar forward pass. `train_mode` selects batch statistics over all
/// frames of the batch instead of running statistics.
pub fn scalar_forward(model: &ClassifierModel<f64>, batch: &[Array2<f64>], train_mode: bool) -> Vec<Vec<f64>> {
    let k = model.config.kernel_size;
    let half = (k / 2) as isize;
    // symmetric zero padding to the kernel size
    let mut acts: Vec<Vec<Vec<f64>>> = batch
        .iter()
        .map(|x| {
            let t = x.nrows().max(k);
            let off = (t - x.nrows()) / 2;
            (0..t)
                .map(|i| {
                    if i >= off && i < off + x.nrows() {
                        x.row(i - off).to_vec()
                    } else {
                        vec![0.0; x.ncols()]
                    }
                })
                .collect()
        })
        .collect();

    for block in &model.blocks {
        let in_ch = block.weight.nrows() / k;
        let out_ch = block.weight.ncols();
        let mut pre: Vec<Vec<Vec<f64>>> = Vec::new();
        for seq in &acts {
            let t_len = seq.len() as isize;
            let mut y = vec![vec![0.0; out_ch]; seq.len()];
            for t in 0..t_len {
                for o in 0..out_ch {
                    let mut acc = 0.0;
                    for j in 0..k as isize {
                        let src = t + j - half;
                        if src < 0 || src >= t_len {
                            continue;
                        }
                        for c in 0..in_ch {
                            acc += seq[src as usize][c] * block.weight[[j as usize * in_ch + c, o]];
                        }
                    }
                    y[t as usize][o] = acc;
                }
            }
            pre.push(y);
        }
        let (mean, var): (Vec<f64>, Vec<f64>) = if train_mode {
            let n: usize = pre.iter().map(|s| s.len()).sum();
            (0..out_ch)
                .map(|o| {
                    let m = pre.iter().flatten().map(|r| r[o]).sum::<f64>() / n as f64;
                    let v = pre.iter().flatten().map(|r| (r[o] - m).powi(2)).sum::<f64>() / n as f64;
                    (m, v)
                })
                .unzip()
        } else {
            (block.running_mean.to_vec(), block.running_var.to_vec())
        };
        acts = pre
            .into_iter()
            .map(|seq| {
                seq.into_iter()
                    .map(|row| {
                        (0..out_ch)
                            .map(|o| {
                                let z = block.gamma[o] * (row[o] - mean[o]) / (var[o] + 1e-5).sqrt() + block.beta[o];
                                z.max(0.0)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
    }

    acts.iter()
        .map(|seq| {
            let ch = seq[0].len();
            let pooled: Vec<f64> = (0..ch).map(|c| seq.iter().map(|r| r[c]).sum::<f64>() / seq.len() as f64).collect();
            let logits: Vec<f64> = (0..model.n_classes())
                .map(|o| model.head_bias[o] + (0..ch).map(|c| pooled[c] * model.head_weight[[c, o]]).sum::<f64>())
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|e| e / z).collect()
        })
        .collect()
}

/// Relative error with a floor on the denominator so that components whose
/// true gradient is numerically zero are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub struct GradCheck {
    pub tensor: String,
    pub checked: usize,
    pub worst: f64,
}

/// Central finite differences (step `h`) against the analytic gradient for
/// the components selected by `pick(tensor_len) -> indices`.
pub fn finite_difference_check(
    model: &ClassifierModel<f64>,
    batch: &[Array2<f64>],
    labels: &[usize],
    h: f64,
    pick: &mut dyn FnMut(usize) -> Vec<usize>,
) -> Vec<GradCheck> {
    let views: Vec<ArrayView2<f64>> = batch.iter().map(|x| x.view()).collect();
    let (_, grads) = model.loss_and_grad(&views, labels).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
    let mut probe = model.clone();
    let mut report = Vec::new();
    for (t, (name, g)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let idx = pick(g.len());
        for &i in &idx {
            let orig = probe.params_mut()[t].1[i];
            probe.params_mut()[t].1[i] = orig + h;
            let up = probe.loss(&views, labels).unwrap();
            probe.params_mut()[t].1[i] = orig - h;
            let down = probe.loss(&views, labels).unwrap();
            probe.params_mut()[t].1[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(g[i], fd));
        }
        report.push(GradCheck { tensor: name.clone(), checked: idx.len(), worst });
    }
    report
}

pub fn gaussian_batch(seed: u64, n: usize, t: usize, d: usize) -> Vec<Array2<f64>> {
    (0..n).map(|i| random_matrix(seed * 1000 + i as u64, t + i % 3, d)).collect()
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition by cyclic Jacobi rotations.
// ---------------------------------------------------------------------------

/// Returns eigenvalues (descending) and eigenvectors as rows, each row's
/// largest-magnitude entry made positive.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut rows = Array2::zeros((n, n));
    for (r, &i) in order.iter().enumerate() {
        let col: Array1<f64> = v.column(i).to_owned();
        let pivot = col.iter().cloned().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        rows.row_mut(r).assign(&(col * sign));
    }
    (values, rows)
}

/// Sample covariance with divisor N-1, by explicit double loop.
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    Array2::from_shape_fn((d, d), |(a, b)| {
        (0..n).map(|i| (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b])).sum::<f64>() / (n - 1) as f64
    })
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank: literal enumeration of all 2^n sign assignments.
// ---------------------------------------------------------------------------

pub struct EnumeratedWilcoxon {
    pub w_plus: f64,
    pub w_minus: f64,
    pub n: usize,
    pub p_value: f64,
}

pub fn enumerate_wilcoxon(pairs: &[(f64, f64)]) -> EnumeratedWilcoxon {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    // average ranks, by counting
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x < 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let observed = (2.0 * w_plus - total).abs();
    let mut count: u64 = 0;
    for mask in 0u64..(1u64 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (2.0 * w - total).abs() >= observed - 1e-9 {
            count += 1;
        }
    }
    EnumeratedWilcoxon { w_plus, w_minus, n, p_value: count as f64 / (1u64 << n) as f64 }
}

// ---------------------------------------------------------------------------
// Metrics for a binary confusion matrix, computed per class by hand.
// ---------------------------------------------------------------------------

pub fn binary_macro_f1(confusion: [[usize; 2]; 2]) -> f64 {
    let f1 = |c: usize| {
        let tp = confusion[c][c] as f64;
        let fp = confusion[1 - c][c] as f64;
        let fn_ = confusion[c][1 - c] as f64;
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    (f1(0) + f1(1)) / 2.0
}

// ---------------------------------------------------------------------------
// Pitch by time-domain autocorrelation: first lag within 10% of the peak.
// ---------------------------------------------------------------------------

pub fn autocorrelation_f0(x: &[f64], fs: f64, f_lo: f64, f_hi: f64) -> f64 {
    let lag_min = (fs / f_hi).floor() as usize;
    let lag_max = (fs / f_lo).ceil() as usize;
    let ac = |lag: usize| -> f64 {
        let n = x.len() - lag;
        (0..n).map(|i| x[i] * x[i + lag]).sum::<f64>() / n as f64
    };
    let values: Vec<f64> = (lag_min..=lag_max + 1).map(ac).collect();
    let peak = values[..values.len() - 1].iter().cloned().fold(f64::MIN, f64::max);
    let mut best = 0;
    for i in 1..values.len() - 1 {
        if values[i] >= 0.9 * peak && values[i] >= values[i - 1] && values[i] >= values[i + 1] {
            best = i;
            break;
        }
    }
    // parabolic refinement around the local maximum
    let (a, b, c) = (values[best.max(1) - 1], values[best], values[best + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-15 { 0.5 * (a - c) / denom } else { 0.0 };
    fs / ((lag_min + best) as f64 + shift)
}

/// Frame-weighted mean of each labelled group of matrices.
pub fn group_means(mats: &[(usize, Array2<f32>)], n_groups: usize) -> Vec<Array1<f64>> {
    let dim = mats[0].1.ncols();
    let mut sums = vec![Array1::<f64>::zeros(dim); n_groups];
    let mut counts = vec![0usize; n_groups];
    for (g, m) in mats {
        for row in m.rows() {
            for (s, v) in sums[*g].iter_mut().zip(row) {
                *s += *v as f64;
            }
            counts[*g] += 1;
        }
    }
    sums.into_iter().zip(counts).map(|(s, c)| s / c as f64).collect()
}

/// Root-mean-square distance of the group means from their centroid.
pub fn mean_separation(means: &[Array1<f64>]) -> f64 {
    let centroid = means.iter().fold(Array1::<f64>::zeros(means[0].len()), |acc, m| acc + m) / means.len() as f64;
    let ss: f64 = means.iter().map(|m| (m - &centroid).mapv(|v| v * v).sum()).sum();
    (ss / means.len() as f64).sqrt()
}
