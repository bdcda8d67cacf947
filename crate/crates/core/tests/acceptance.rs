//! Acceptance suite: one PASS/FAIL line per criterion, checked at the stated
//! tolerances and time budgets. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use trait_probe::audio::{mfcc_for_manifest, MfccConfig, MfccExtractor};
use trait_probe::features::{MemoryStore, ModelId, RoutedSource};
use trait_probe::manifest::Task;
use trait_probe::nn::{ClassifierConfig, ClassifierModel};
use trait_probe::pca::fit_pca;
use trait_probe::stats::{compute_metrics, wilcoxon_signed_rank, StatsError, WilcoxonMethod};
use trait_probe::sweep::{csv_string, run_layer_sweep, run_pca_sweep, PcaPlan, SweepPlan, SweepReport, SystemSpec};
use trait_probe::synth::{generate_corpus, PseudoSslSource, SslSim, SynthSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
                o.detail.push_str(&format!("; over budget {:.0}s", b.as_secs_f64()));
            }
        }
        if !o.pass {
            self.failures += 1;
        }
        println!("{} {name}: {} ({:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64());
    }
}

fn mfcc_oracle() -> Outcome {
    let ext = MfccExtractor::new(MfccConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut frames_ok = true;
    for seed in 0..20 {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..16000).map(|_| r.random_range(-0.5..0.5)).collect();
        let got = ext.compute(&x).unwrap();
        let want = naive_mfcc(&x);
        frames_ok &= got.nrows() == (16000 - 400) / 160 + 1 && want.len() == got.nrows();
        for (f, row) in want.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                worst = worst.max((got[[f, k]] - v).abs());
            }
        }
    }
    for n in [400, 401, 559, 560, 1000] {
        frames_ok &= ext.compute(&vec![0.1; n]).unwrap().nrows() == (n - 400) / 160 + 1;
    }
    outcome(worst < 1e-4 && frames_ok, format!("20 signals, max abs diff {worst:.2e}, frame counts exact: {frames_ok}"))
}

/// Loss along a random direction over all parameters, for a whole-gradient check.
fn directional(model: &ClassifierModel<f64>, views: &[ArrayView2<f64>], labels: &[usize], grad: &[Vec<f64>], seed: u64) -> f64 {
    let mut r = rng(seed);
    let dir: Vec<Vec<f64>> = grad.iter().map(|g| g.iter().map(|_| StandardNormal.sample(&mut r)).collect()).collect();
    let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let analytic: f64 = grad.iter().flatten().zip(dir.iter().flatten()).map(|(g, d)| g * d / norm).sum();
    let h = 1e-5;
    let shifted = |s: f64| {
        let mut m = model.clone();
        for ((_, p), d) in m.params_mut().into_iter().zip(&dir) {
            p.iter_mut().zip(d).for_each(|(v, dv)| *v += s * dv / norm);
        }
        m.loss(views, labels).unwrap()
    };
    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
    rel_err(analytic, fd)
}

fn gradient_check() -> Outcome {
    const FULL_LIMIT: usize = 2048;
    const SAMPLED: usize = 192;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut tensors = 0;
    let mut worst_dir: f64 = 0.0;
    for seed in 0..3u64 {
        let model = ClassifierModel::<f64>::new(ClassifierConfig::new(3, 3), seed).unwrap();
        assert_eq!(model.config.kernel_size, 5);
        let batch = gaussian_batch(seed + 10, 3, 6, 3);
        let labels = [0, 1, 2];
        let mut r = rng(seed + 500);
        let report = finite_difference_check(&model, &batch, &labels, 1e-5, &mut |n| {
            if n <= FULL_LIMIT {
                (0..n).collect()
            } else {
                sample(&mut r, n, SAMPLED).into_vec()
            }
        });
        for g in &report {
            worst = worst.max(g.worst);
            checked += g.checked;
        }
        tensors = report.len();
        let views: Vec<_> = batch.iter().map(|x| x.view()).collect();
        let (_, grads) = model.loss_and_grad(&views, &labels).unwrap();
        let flat: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, g)| g.to_vec()).collect();
        worst_dir = worst_dir.max(directional(&model, &views, &labels, &flat, seed));
    }
    outcome(
        worst < 1e-3 && worst_dir < 1e-3,
        format!("channels 64/128/256 kernel 5, 3 seeds, {tensors} tensors, {checked} components, worst rel err {worst:.2e}, directional {worst_dir:.2e}"),
    )
}

fn pca_oracle() -> Outcome {
    let mut worst_val: f64 = 0.0;
    let mut worst_vec: f64 = 0.0;
    let mut worst_total: f64 = 0.0;
    for seed in 0..5 {
        for (n, d) in [(10, 5), (50, 8)] {
            let x = random_matrix(seed * 7 + n as u64, n, d);
            let model = fit_pca(x.view(), d).unwrap();
            let cov = covariance(&x);
            let (values, vectors) = jacobi_eigen(&cov);
            for i in 0..d {
                worst_val = worst_val.max((model.eigenvalues[i] - values[i]).abs());
                for j in 0..d {
                    worst_vec = worst_vec.max((model.basis[[i, j]] - vectors[[i, j]]).abs());
                }
            }
            let trace: f64 = (0..d).map(|j| cov[[j, j]]).sum();
            worst_total = worst_total.max((model.eigenvalues.sum() - trace).abs());
        }
    }
    outcome(
        worst_val < 1e-6 && worst_vec < 1e-6 && worst_total < 1e-9,
        format!("10x5 and 50x8, eigenvalue err {worst_val:.1e}, basis err {worst_vec:.1e}, variance identity err {worst_total:.1e}"),
    )
}

fn wilcoxon_oracle() -> Outcome {
    let mut exact = 0;
    let mut mismatches = 0;
    let mut identity_ok = true;
    for n in 1..=12usize {
        for seed in 0..50u64 {
            let mut r = rng(seed * 1000 + n as u64);
            let pairs: Vec<(f64, f64)> =
                (0..n).map(|_| (r.random_range(0..8) as f64 * 0.5, r.random_range(0..8) as f64 * 0.5)).collect();
            let oracle = enumerate_wilcoxon(&pairs);
            match wilcoxon_signed_rank(&pairs) {
                Ok(w) => {
                    exact += 1;
                    let ne = w.n_effective as f64;
                    identity_ok &= w.w_plus + w.w_minus == ne * (ne + 1.0) / 2.0;
                    if w.method != WilcoxonMethod::Exact || w.p_value.to_bits() != oracle.p_value.to_bits() || w.w_plus != oracle.w_plus {
                        mismatches += 1;
                    }
                }
                Err(StatsError::TooFewPairs { n_effective, .. }) if n_effective == oracle.n && n_effective < 5 => {}
                Err(StatsError::AllZeroDifferences) if oracle.n == 0 => {}
                Err(_) => mismatches += 1,
            }
        }
    }
    outcome(
        mismatches == 0 && identity_ok,
        format!("n = 1..12 x 50 sets, {exact} exact results equal to enumeration, {mismatches} mismatches, W+ + W- identity: {identity_ok}"),
    )
}

fn metrics_check() -> Outcome {
    let mut pairs = Vec::new();
    for (t, row) in [[8usize, 2], [3, 7]].iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat_n((t, p), count));
        }
    }
    let r = compute_metrics(&pairs, 2).unwrap();
    let f1 = binary_macro_f1([[8, 2], [3, 7]]);
    let ok = (r.accuracy - 0.75).abs() < 1e-4 && (r.f1 - f1).abs() < 1e-4;
    outcome(
        ok,
        format!(
            "A = {:.4}, macro F1 = {:.5} vs independent per-class mean {f1:.5}; the rounded figure 0.7498 is {:.1e} away",
            r.accuracy,
            r.f1,
            (r.f1 - 0.7498).abs()
        ),
    )
}

fn sweep_fixture() -> (trait_probe::manifest::DatasetManifest, MemoryStore, PseudoSslSource, tempfile::TempDir) {
    let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_corpus(&spec, dir.path()).unwrap();
    let mut mfcc = MemoryStore::new();
    for m in mfcc_for_manifest(&manifest, dir.path(), &MfccConfig::default()).unwrap() {
        mfcc.insert(m).unwrap();
    }
    let ssl = PseudoSslSource { spec, manifest: manifest.clone() };
    (manifest, mfcc, ssl, dir)
}

fn main() {
    let mut suite = Suite { failures: 0 };
    suite.check("mfcc matches naive-DFT oracle", Some(Duration::from_secs(30)), mfcc_oracle);
    suite.check("probe gradients match central differences", Some(Duration::from_secs(60)), gradient_check);
    suite.check("pca matches Jacobi oracle", Some(Duration::from_secs(10)), pca_oracle);
    suite.check("wilcoxon exact p equals enumeration", Some(Duration::from_secs(30)), wilcoxon_oracle);
    suite.check("metrics on confusion [[8,2],[3,7]]", None, metrics_check);

    let (manifest, mfcc, ssl, _dir) = sweep_fixture();
    let features = RoutedSource { mfcc: &mfcc, ssl: &ssl };
    let mut plan = SweepPlan::new(Task::Age);
    plan.systems.push(SystemSpec::all_layers(ModelId::Base100h));

    let mut layer_report: Option<SweepReport> = None;
    suite.check("layer sweep favours early layers", Some(Duration::from_secs(15 * 60)), || {
        let report = run_layer_sweep(&manifest, &features, &plan).unwrap();
        let best = report.best_row("base-100h").unwrap();
        let best_acc = best.accuracy().unwrap();
        let l12 = report.rows.iter().find(|r| r.layer == Some(12)).and_then(|r| r.accuracy()).unwrap_or(f64::NAN);
        let accs: Vec<String> = report.rows.iter().map(|r| format!("{:.3}", r.accuracy().unwrap_or(f64::NAN))).collect();
        let base = report.baseline().and_then(|r| r.accuracy()).unwrap_or(f64::NAN);
        let p = report.comparisons.first().and_then(|c| c.result.as_ref()).map_or(f64::NAN, |w| w.p_value);
        let layer = best.layer.unwrap();
        let o = outcome(
            layer <= 2 && best_acc - l12 >= 0.15,
            format!(
                "{} test utterances, best layer {layer} at {best_acc:.3}, layer 12 at {l12:.3}; mfcc {base:.3}, Wilcoxon p {p:.2e}; accuracies [{}]",
                report.provenance.n_test,
                accs.join(" ")
            ),
        );
        layer_report = Some(report);
        o
    });

    let best_layer = layer_report.as_ref().and_then(|r| r.best_row("base-100h")).and_then(|r| r.layer).unwrap_or(0);
    let mut pca_plan = plan.clone();
    pca_plan.systems.clear();
    pca_plan.pca = Some(PcaPlan { best_layers: vec![(ModelId::Base100h, best_layer)], ks: None });
    suite.check("pca sweep keeps accuracy below full width", Some(Duration::from_secs(20 * 60)), || {
        let report = run_pca_sweep(&manifest, &features, &pca_plan).unwrap();
        let control = report.rows.iter().find(|r| r.model == "base-100h" && r.k.is_none()).and_then(|r| r.accuracy()).unwrap();
        let reduced: Vec<(usize, f64)> =
            report.rows.iter().filter_map(|r| Some((r.k.filter(|&k| k < 768)?, r.accuracy()?))).collect();
        let (k, acc) = reduced.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).unwrap();
        let listing: Vec<String> = reduced.iter().map(|(k, a)| format!("{k}:{a:.3}")).collect();
        outcome(
            acc >= control - 0.02,
            format!("layer {best_layer}, control {control:.3}, best k={k} at {acc:.3}; [{}]", listing.join(" ")),
        )
    });

    suite.check("sweep csv is byte-identical on repeat", None, || match &layer_report {
        Some(first) => {
            let again = run_layer_sweep(&manifest, &features, &plan).unwrap();
            let (a, b) = (csv_string(first).unwrap(), csv_string(&again).unwrap());
            outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
        }
        None => outcome(false, "layer sweep did not run"),
    });

    if suite.failures > 0 {
        println!("{} criterion(s) failed", suite.failures);
        std::process::exit(1);
    }
}
