use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{argmax, cross_entropy, ClassifierModel};
use super::{ClassifierConfig, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            patience: 7,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.patience < self.max_epochs
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    fn new(model: &mut ClassifierModel<f32>) -> Self {
        let sizes: Vec<usize> = model.params_mut().iter().map(|(_, p)| p.len()).collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, cfg: &TrainConfig, model: &mut ClassifierModel<f32>, grads: &super::Gradients<f32>) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate as f32;
        let eps = cfg.epsilon as f32;
        for (((_, param), (_, grad)), (m, v)) in model
            .params_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Stratified hold-out: `val_fraction` of each class (rounded), at least one
/// item overall, never emptying a class from the training side.
fn split_validation(labels: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for idx in by_class.values_mut() {
        idx.shuffle(rng);
        let take = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    if val.is_empty() {
        if let Some(largest) = by_class.values().filter(|v| v.len() > 1).max_by_key(|v| v.len()) {
            let moved = largest[0];
            train.retain(|&i| i != moved);
            val.push(moved);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn evaluate(model: &ClassifierModel<f32>, items: &[ArrayView2<f32>], labels: &[usize], chunk: usize) -> Result<(f64, f64), NnError> {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (batch, lab) in items.chunks(chunk).zip(labels.chunks(chunk)) {
        let probs = model.forward(batch)?;
        for (row, &l) in probs.rows().into_iter().zip(lab) {
            if argmax(row.as_slice().unwrap()) == l {
                correct += 1;
            }
        }
        loss += cross_entropy(&probs, lab) * lab.len() as f64;
    }
    Ok((correct as f64 / labels.len() as f64, loss / labels.len() as f64))
}

/// Trains a probe from scratch. Deterministic for a given seed: fixed
/// initialisation, hold-out split and per-epoch shuffle order. Returns the
/// parameters from the epoch with the best validation accuracy (lower
/// validation loss breaks ties).
pub fn train(
    items: &[Array2<f32>],
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel<f32>, TrainTrace), NnError> {
    cfg.validate()?;
    if items.len() != labels.len() {
        return Err(NnError::ShapeMismatch(format!("{} items but {} labels", items.len(), labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(NnError::InvalidLabel { label, n_classes });
    }
    let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(NnError::DegenerateData(format!("{} distinct class(es) in training data", distinct.len())));
    }
    let in_dim = items[0].ncols();
    if let Some(bad) = items.iter().position(|x| x.ncols() != in_dim || x.nrows() == 0) {
        return Err(NnError::ShapeMismatch(format!("item {bad} has shape {:?}, expected (_, {in_dim})", items[bad].dim())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = split_validation(labels, cfg.val_fraction, &mut rng);
    let val_items: Vec<_> = val_idx.iter().map(|&i| items[i].view()).collect();
    let val_labels: Vec<_> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut model = ClassifierModel::<f32>::new(ClassifierConfig::new(in_dim, n_classes), cfg.seed)?;
    let mut adam = Adam::new(&mut model);
    let mut best: Option<(f64, f64, ClassifierModel<f32>, usize)> = None;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut order = train_idx.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| items[i].view()).collect();
            let batch_labels: Vec<_> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads, stats) = model.loss_grad_trace(&batch, &batch_labels)?;
            if !loss.is_finite() {
                return Err(NnError::DivergedLoss { epoch, loss });
            }
            let rows: usize = batch.iter().map(|b| b.nrows().max(model.config.kernel_size)).sum();
            model.update_running_stats(&stats, rows);
            adam.apply(cfg, &mut model, &grads);
            loss_sum += loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        if !model.all_finite() {
            return Err(NnError::DivergedLoss { epoch, loss: f64::NAN });
        }
        let (val_accuracy, val_loss) = if val_items.is_empty() {
            (0.0, train_loss)
        } else {
            evaluate(&model, &val_items, &val_labels, cfg.batch_size)?
        };
        epochs.push(EpochStats { epoch, train_loss, val_accuracy, val_loss });
        log::debug!("epoch {epoch}: train_loss={train_loss:.4} val_acc={val_accuracy:.4} val_loss={val_loss:.4}");

        let improved = match &best {
            None => true,
            Some((acc, loss, _, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((val_accuracy, val_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, _, best_model, best_epoch) = best.expect("at least one epoch");
    Ok((best_model, TrainTrace { epochs, best_epoch, n_train: train_idx.len(), n_val: val_idx.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_is_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, val) = split_validation(&labels, 0.1, &mut rng);
        assert_eq!(train.len() + val.len(), 100);
        assert_eq!(val.len(), 12);
        for c in 0..4 {
            assert_eq!(val.iter().filter(|&&i| labels[i] == c).count(), 3);
        }
    }

    #[test]
    fn tiny_split_still_has_a_validation_item() {
        let labels = vec![0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, val) = split_validation(&labels, 0.1, &mut rng);
        assert_eq!(val.len(), 1);
        assert_eq!(train.len(), 2);
    }

    #[test]
    fn single_class_is_degenerate() {
        let items = vec![Array2::<f32>::zeros((5, 3)); 4];
        let err = train(&items, &[1, 1, 1, 1], 2, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NnError::DegenerateData(_)));
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig { patience: 50, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }
}
