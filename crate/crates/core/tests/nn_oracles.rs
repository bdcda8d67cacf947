mod common;

use common::*;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use trait_probe::nn::{self, ClassifierConfig, ClassifierModel, TrainConfig};

fn tiny_model(seed: u64) -> ClassifierModel<f64> {
    let mut m = ClassifierModel::<f64>::new(ClassifierConfig::with_channels(3, 2, vec![2, 2, 2]), seed).unwrap();
    // hand-set, deterministic non-trivial values everywhere
    for (t, (_, p)) in m.params_mut().into_iter().enumerate() {
        for (i, v) in p.iter_mut().enumerate() {
            *v = ((t * 7 + i * 3) % 11) as f64 / 11.0 - 0.45;
        }
    }
    for b in &mut m.blocks {
        b.running_mean = Array1::from(vec![0.1, -0.2]);
        b.running_var = Array1::from(vec![0.8, 1.3]);
        b.gamma.mapv_inplace(|g| g + 1.0);
    }
    m
}

#[test]
fn forward_matches_scalar_oracle_on_tiny_model() {
    let model = tiny_model(0);
    let batch = vec![random_matrix(1, 8, 3), random_matrix(2, 6, 3), random_matrix(3, 2, 3)];
    let views: Vec<_> = batch.iter().map(|x| x.view()).collect();
    for (train_mode, probs) in [(false, model.forward(&views).unwrap()), (true, model.forward_train(&views).unwrap())] {
        let oracle = scalar_forward(&model, &batch, train_mode);
        for (row, expect) in probs.rows().into_iter().zip(&oracle) {
            for (a, b) in row.iter().zip(expect) {
                assert!((a - b).abs() < 1e-6, "train_mode={train_mode}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn forward_matches_scalar_oracle_on_probe_architecture() {
    let model = ClassifierModel::<f64>::new(ClassifierConfig::new(4, 3), 17).unwrap();
    let batch = vec![random_matrix(4, 9, 4), random_matrix(5, 5, 4)];
    let views: Vec<_> = batch.iter().map(|x| x.view()).collect();
    let probs = model.forward_train(&views).unwrap();
    let oracle = scalar_forward(&model, &batch, true);
    for (row, expect) in probs.rows().into_iter().zip(&oracle) {
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn every_gradient_component_of_tiny_model_matches_finite_differences() {
    for seed in 0..3 {
        let mut model = ClassifierModel::<f64>::new(ClassifierConfig::with_channels(3, 3, vec![4, 5, 6]), seed).unwrap();
        let mut r = rng(seed + 100);
        model.head_bias.mapv_inplace(|_| r.random_range(-0.5..0.5));
        for b in &mut model.blocks {
            b.gamma.mapv_inplace(|_| r.random_range(0.5..1.5));
            b.beta.mapv_inplace(|_| r.random_range(-0.3..0.3));
        }
        let batch = gaussian_batch(seed, 4, 7, 3);
        let labels = [0, 2, 1, 2];
        let report = finite_difference_check(&model, &batch, &labels, 1e-3, &mut |n| (0..n).collect());
        for g in &report {
            assert!(g.worst < 1e-3, "seed {seed} {}: worst rel err {:.2e}", g.tensor, g.worst);
        }
        assert_eq!(report.len(), 3 * 3 + 2);
    }
}

fn separable_corpus(seed: u64, n: usize, dims: usize) -> (Vec<Array2<f32>>, Vec<usize>) {
    let mut r = rng(seed);
    let dir: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut items = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let sign = if label == 0 { -1.5 } else { 1.5 };
        let t = r.random_range(8..16);
        let x = Array2::from_shape_fn((t, dims), |(_, j)| {
            let noise: f64 = StandardNormal.sample(&mut r);
            (sign * dir[j] / norm * 3.0 + noise) as f32
        });
        items.push(x);
        labels.push(label);
    }
    (items, labels)
}

fn checksum(model: &ClassifierModel<f32>) -> Vec<u32> {
    let mut m = model.clone();
    m.params_mut().into_iter().flat_map(|(_, p)| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
}

#[test]
fn separable_gaussians_are_learned_deterministically() {
    let (items, labels) = separable_corpus(7, 200, 26);
    let cfg = TrainConfig { seed: 3, max_epochs: 12, ..TrainConfig::default() };
    let (model, trace) = nn::train(&items, &labels, 2, &cfg).unwrap();
    let views: Vec<_> = items.iter().map(|x| x.view()).collect();
    let preds = model.predict_many(&views, 32).unwrap();
    let acc = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64;
    assert!(acc >= 0.99, "train accuracy {acc}");

    // loss does not increase over the first three epochs
    let losses: Vec<f64> = trace.epochs.iter().take(3).map(|e| e.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");

    let (again, trace2) = nn::train(&items, &labels, 2, &cfg).unwrap();
    assert_eq!(checksum(&model), checksum(&again));
    assert_eq!(trace, trace2);

    // predict recovers the fixture labels one utterance at a time
    for (x, &l) in items.iter().zip(&labels).take(20) {
        let (class, probs) = model.predict(x.view()).unwrap();
        assert_eq!(class, l);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn argmax_is_invariant_to_temperature() {
    let model = ClassifierModel::<f64>::new(ClassifierConfig::new(6, 4), 21).unwrap();
    let x = random_matrix(9, 10, 6);
    let probs = model.forward(&[x.view()]).unwrap();
    let logits: Vec<f64> = probs.row(0).iter().map(|p| p.ln()).collect();
    let base = trait_probe::nn::model::argmax(&logits);
    for temp in [0.1, 0.5, 2.0, 10.0] {
        let scaled: Vec<f64> = logits.iter().map(|l| l / temp).collect();
        assert_eq!(trait_probe::nn::model::argmax(&scaled), base);
    }
    assert_eq!(model.predict(x.view()).unwrap().0, base);
}
