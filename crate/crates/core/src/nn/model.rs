use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifierConfig, NnError, Scalar};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Conv weights are stored im2col-ready: row `j * in_ch + c` holds tap `j`
/// of input channel `c`, one column per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<F> {
    pub weight: Array2<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<F = f32> {
    pub config: ClassifierConfig,
    pub blocks: Vec<ConvBlock<F>>,
    /// `last_channels × n_classes`.
    pub head_weight: Array2<F>,
    pub head_bias: Array1<F>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad<F> {
    pub weight: Array2<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub blocks: Vec<BlockGrad<F>>,
    pub head_weight: Array2<F>,
    pub head_bias: Array1<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}.weight"), b.weight.as_slice().unwrap()));
            out.push((format!("conv{i}.gamma"), b.gamma.as_slice().unwrap()));
            out.push((format!("conv{i}.beta"), b.beta.as_slice().unwrap()));
        }
        out.push(("head.weight".into(), self.head_weight.as_slice().unwrap()));
        out.push(("head.bias".into(), self.head_bias.as_slice().unwrap()));
        out
    }
}

/// Variable-length sequences stacked row-wise, with each sequence's row span.
pub(crate) struct Packed<F> {
    pub x: Array2<F>,
    pub spans: Vec<(usize, usize)>,
}

impl<F: Scalar> Packed<F> {
    /// Sequences shorter than `min_len` are zero-padded symmetrically
    /// (extra frame on the right when the padding is odd).
    pub fn new(batch: &[ArrayView2<F>], min_len: usize) -> Self {
        let lens: Vec<usize> = batch.iter().map(|b| b.nrows().max(min_len)).collect();
        let total: usize = lens.iter().sum();
        let dims = batch.first().map_or(0, |b| b.ncols());
        let mut x = Array2::zeros((total, dims));
        let mut spans = Vec::with_capacity(batch.len());
        let mut start = 0;
        for (seq, &len) in batch.iter().zip(&lens) {
            let offset = (len - seq.nrows()) / 2;
            x.slice_mut(s![start + offset..start + offset + seq.nrows(), ..]).assign(seq);
            spans.push((start, len));
            start += len;
        }
        Packed { x, spans }
    }
}

/// Unfolds `x` so that row `t` holds the kernel window centred on `t`
/// (zero outside each sequence).
fn im2col<F: Scalar>(x: &Array2<F>, spans: &[(usize, usize)], kernel: usize) -> Array2<F> {
    let in_ch = x.ncols();
    let half = kernel / 2;
    let mut cols = Array2::<F>::zeros((x.nrows(), kernel * in_ch));
    let src = x.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().unwrap();
    let width = kernel * in_ch;
    for &(start, len) in spans {
        for t in 0..len {
            let row = &mut dst[(start + t) * width..(start + t + 1) * width];
            for j in 0..kernel {
                let Some(s) = (t + j).checked_sub(half).filter(|&s| s < len) else { continue };
                let from = (start + s) * in_ch;
                row[j * in_ch..(j + 1) * in_ch].copy_from_slice(&src[from..from + in_ch]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<F: Scalar>(dcols: &Array2<F>, spans: &[(usize, usize)], kernel: usize, in_ch: usize) -> Array2<F> {
    let half = kernel / 2;
    let mut dx = Array2::<F>::zeros((dcols.nrows(), in_ch));
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().unwrap();
    let width = kernel * in_ch;
    for &(start, len) in spans {
        for t in 0..len {
            let row = &src[(start + t) * width..(start + t + 1) * width];
            for j in 0..kernel {
                let Some(s) = (t + j).checked_sub(half).filter(|&s| s < len) else { continue };
                let to = &mut dst[(start + s) * in_ch..(start + s + 1) * in_ch];
                for (d, &g) in to.iter_mut().zip(&row[j * in_ch..(j + 1) * in_ch]) {
                    *d += g;
                }
            }
        }
    }
    dx
}

fn matmul<F: Scalar>(a: &ArrayView2<F>, b: &ArrayView2<F>) -> Array2<F> {
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(F::one(), a, b, F::zero(), &mut c);
    c
}

struct BlockCache<F> {
    cols: Array2<F>,
    xhat: Array2<F>,
    inv_std: Array1<F>,
    out: Array2<F>,
    batch_mean: Array1<F>,
    batch_var: Array1<F>,
}

pub(crate) struct ForwardTrace<F> {
    blocks: Vec<BlockCache<F>>,
    pooled: Array2<F>,
    pub probs: Array2<F>,
    spans: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Train,
    Infer,
}

fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

impl<F: Scalar> ClassifierModel<F> {
    /// Kaiming-uniform conv/linear weights, unit BN gains, zero offsets and head bias.
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || F::of(rng.random_range(-bound..bound)))
        };
        let mut blocks = Vec::with_capacity(config.conv_channels.len());
        let mut in_ch = config.in_dim;
        for &out_ch in &config.conv_channels {
            let fan_in = config.kernel_size * in_ch;
            blocks.push(ConvBlock {
                weight: uniform(fan_in, out_ch, fan_in),
                gamma: Array1::ones(out_ch),
                beta: Array1::zeros(out_ch),
                running_mean: Array1::zeros(out_ch),
                running_var: Array1::ones(out_ch),
            });
            in_ch = out_ch;
        }
        let head_weight = uniform(in_ch, config.n_classes, in_ch);
        let head_bias = Array1::zeros(config.n_classes);
        Ok(ClassifierModel { config, blocks, head_weight, head_bias, seed })
    }

    pub fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    /// Trainable tensors in a fixed order, matching [`Gradients::tensors`].
    pub fn params_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let ConvBlock { weight, gamma, beta, .. } = b;
            out.push((format!("conv{i}.weight"), weight.as_slice_mut().unwrap()));
            out.push((format!("conv{i}.gamma"), gamma.as_slice_mut().unwrap()));
            out.push((format!("conv{i}.beta"), beta.as_slice_mut().unwrap()));
        }
        out.push(("head.weight".into(), self.head_weight.as_slice_mut().unwrap()));
        out.push(("head.bias".into(), self.head_bias.as_slice_mut().unwrap()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.weight.len() + b.gamma.len() + b.beta.len()).sum::<usize>()
            + self.head_weight.len()
            + self.head_bias.len()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| {
            [&b.gamma, &b.beta, &b.running_mean, &b.running_var].iter().all(|a| a.iter().all(|v| v.is_finite()))
                && b.weight.iter().all(|v| v.is_finite())
        }) && self.head_weight.iter().all(|v| v.is_finite())
            && self.head_bias.iter().all(|v| v.is_finite())
    }

    fn check_batch(&self, batch: &[ArrayView2<F>]) -> Result<(), NnError> {
        if batch.is_empty() {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        for (i, item) in batch.iter().enumerate() {
            if item.ncols() != self.config.in_dim {
                return Err(NnError::ShapeMismatch(format!(
                    "batch item {i} has {} feature dims, model expects {}",
                    item.ncols(),
                    self.config.in_dim
                )));
            }
            if item.nrows() == 0 {
                return Err(NnError::ShapeMismatch(format!("batch item {i} has zero frames")));
            }
        }
        Ok(())
    }

    fn run(&self, batch: &[ArrayView2<F>], mode: Mode) -> ForwardTrace<F> {
        let packed = Packed::new(batch, self.config.kernel_size);
        let spans = packed.spans;
        let mut x = packed.x;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let eps = F::of(BN_EPS);
        for block in &self.blocks {
            let cols = im2col(&x, &spans, self.config.kernel_size);
            let y = matmul(&cols.view(), &block.weight.view());
            let n = F::of(y.nrows() as f64);
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = y.sum_axis(Axis(0)) / n;
                    let centered = &y - &mean;
                    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
                    (mean, var)
                }
                Mode::Infer => (block.running_mean.clone(), block.running_var.clone()),
            };
            let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
            let xhat = (&y - &mean) * &inv_std;
            let out = (&xhat * &block.gamma + &block.beta).mapv(|v| v.max(F::zero()));
            x = out.clone();
            if mode == Mode::Train {
                caches.push(BlockCache { cols, xhat, inv_std, out, batch_mean: mean, batch_var: var });
            }
        }
        let mut pooled = Array2::zeros((spans.len(), x.ncols()));
        for (i, &(start, len)) in spans.iter().enumerate() {
            let mean = x.slice(s![start..start + len, ..]).sum_axis(Axis(0)) / F::of(len as f64);
            pooled.row_mut(i).assign(&mean);
        }
        let logits = matmul(&pooled.view(), &self.head_weight.view()) + &self.head_bias;
        let probs = softmax_rows(&logits);
        ForwardTrace { blocks: caches, pooled, probs, spans }
    }

    /// Class probabilities, `B × C`, with batch norm using running statistics.
    pub fn forward(&self, batch: &[ArrayView2<F>]) -> Result<Array2<F>, NnError> {
        self.check_batch(batch)?;
        Ok(self.run(batch, Mode::Infer).probs)
    }

    /// Class probabilities with batch norm using the batch's own statistics.
    pub fn forward_train(&self, batch: &[ArrayView2<F>]) -> Result<Array2<F>, NnError> {
        self.check_batch(batch)?;
        Ok(self.run(batch, Mode::Train).probs)
    }

    /// Mean categorical cross-entropy (accumulated in f64) and its gradient
    /// with respect to every trainable tensor, batch norm in training mode.
    pub fn loss_and_grad(&self, batch: &[ArrayView2<F>], labels: &[usize]) -> Result<(f64, Gradients<F>), NnError> {
        let (loss, grads, _) = self.loss_grad_trace(batch, labels)?;
        Ok((loss, grads))
    }

    /// Training-mode loss only; the finite-difference counterpart of [`Self::loss_and_grad`].
    pub fn loss(&self, batch: &[ArrayView2<F>], labels: &[usize]) -> Result<f64, NnError> {
        self.check_batch(batch)?;
        self.check_labels(batch, labels)?;
        let trace = self.run(batch, Mode::Train);
        Ok(cross_entropy(&trace.probs, labels))
    }

    fn check_labels(&self, batch: &[ArrayView2<F>], labels: &[usize]) -> Result<(), NnError> {
        if labels.len() != batch.len() {
            return Err(NnError::ShapeMismatch(format!("{} labels for {} batch items", labels.len(), batch.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.config.n_classes) {
            return Err(NnError::InvalidLabel { label, n_classes: self.config.n_classes });
        }
        Ok(())
    }

    pub(crate) fn loss_grad_trace(
        &self,
        batch: &[ArrayView2<F>],
        labels: &[usize],
    ) -> Result<(f64, Gradients<F>, Vec<(Array1<F>, Array1<F>)>), NnError> {
        self.check_batch(batch)?;
        self.check_labels(batch, labels)?;
        let trace = self.run(batch, Mode::Train);
        let loss = cross_entropy(&trace.probs, labels);
        let b = F::of(batch.len() as f64);

        let mut dlogits = trace.probs.clone();
        for (i, &l) in labels.iter().enumerate() {
            dlogits[[i, l]] -= F::one();
        }
        dlogits.mapv_inplace(|v| v / b);
        let head_weight = matmul(&trace.pooled.t(), &dlogits.view());
        let head_bias = dlogits.sum_axis(Axis(0));
        let dpooled = matmul(&dlogits.view(), &self.head_weight.t());

        let last = trace.blocks.last().expect("at least one block");
        let mut dact = Array2::<F>::zeros(last.out.raw_dim());
        for (i, &(start, len)) in trace.spans.iter().enumerate() {
            let g = dpooled.row(i).mapv(|v| v / F::of(len as f64));
            dact.slice_mut(s![start..start + len, ..]).assign(&g.broadcast((len, g.len())).unwrap());
        }

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (idx, (block, cache)) in self.blocks.iter().zip(&trace.blocks).enumerate().rev() {
            // ReLU
            Zip::from(&mut dact).and(&cache.out).for_each(|d, &o| {
                if o <= F::zero() {
                    *d = F::zero();
                }
            });
            let dz = dact;
            let gamma_grad = (&dz * &cache.xhat).sum_axis(Axis(0));
            let beta_grad = dz.sum_axis(Axis(0));
            let n = F::of(dz.nrows() as f64);
            let dxhat = &dz * &block.gamma;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
            let mut dy = dxhat;
            Zip::from(dy.rows_mut()).and(cache.xhat.rows()).for_each(|mut dyr, xr| {
                Zip::from(&mut dyr)
                    .and(&xr)
                    .and(&sum_dxhat)
                    .and(&sum_dxhat_xhat)
                    .and(&cache.inv_std)
                    .for_each(|d, &xh, &s1, &s2, &is| {
                        *d = is / n * (n * *d - s1 - xh * s2);
                    });
            });
            let weight_grad = matmul(&cache.cols.t(), &dy.view());
            dact = if idx > 0 {
                let dcols = matmul(&dy.view(), &block.weight.t());
                col2im(&dcols, &trace.spans, self.config.kernel_size, block.weight.nrows() / self.config.kernel_size)
            } else {
                Array2::zeros((0, 0))
            };
            block_grads.push(BlockGrad { weight: weight_grad, gamma: gamma_grad, beta: beta_grad });
        }
        block_grads.reverse();
        let stats = trace.blocks.into_iter().map(|c| (c.batch_mean, c.batch_var)).collect();
        Ok((loss, Gradients { blocks: block_grads, head_weight, head_bias }, stats))
    }

    /// Exponential moving update of BN running statistics from one training batch.
    pub(crate) fn update_running_stats(&mut self, stats: &[(Array1<F>, Array1<F>)], n_rows: usize) {
        let m = F::of(BN_MOMENTUM);
        let unbias = if n_rows > 1 { F::of(n_rows as f64 / (n_rows as f64 - 1.0)) } else { F::one() };
        for (block, (mean, var)) in self.blocks.iter_mut().zip(stats) {
            Zip::from(&mut block.running_mean).and(mean).for_each(|r, &v| *r = (F::one() - m) * *r + m * v);
            Zip::from(&mut block.running_var).and(var).for_each(|r, &v| *r = (F::one() - m) * *r + m * v * unbias);
        }
    }

    /// Predicted class and probability vector for a single utterance.
    pub fn predict(&self, frames: ArrayView2<F>) -> Result<(usize, Vec<F>), NnError> {
        let probs = self.forward(&[frames])?;
        let row = probs.row(0).to_vec();
        Ok((argmax(&row), row))
    }

    /// Batched inference over many utterances, `chunk` at a time.
    pub fn predict_many(&self, items: &[ArrayView2<F>], chunk: usize) -> Result<Vec<usize>, NnError> {
        let mut out = Vec::with_capacity(items.len());
        for batch in items.chunks(chunk.max(1)) {
            let probs = self.forward(batch)?;
            out.extend(probs.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())));
        }
        Ok(out)
    }
}

/// Index of the first maximum.
pub fn argmax<F: PartialOrd + Copy>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn cross_entropy<F: Scalar>(probs: &Array2<F>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[[i, l]].to_f64().unwrap().max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}

impl ClassifierModel<f32> {
    pub fn to_f64(&self) -> ClassifierModel<f64> {
        let c = |a: &Array1<f32>| a.mapv(f64::from);
        ClassifierModel {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    weight: b.weight.mapv(f64::from),
                    gamma: c(&b.gamma),
                    beta: c(&b.beta),
                    running_mean: c(&b.running_mean),
                    running_var: c(&b.running_var),
                })
                .collect(),
            head_weight: self.head_weight.mapv(f64::from),
            head_bias: c(&self.head_bias),
            seed: self.seed,
        }
    }
}
