mod common;

use std::fs;

use common::*;
use trait_probe::audio::read_wav;
use trait_probe::features::{read_features, DiskStore, FeatureSource, ModelId, Source};
use trait_probe::manifest::{Split, Task, TaskSpec};
use trait_probe::nn::{self, TrainConfig};
use trait_probe::synth::{self, SslSim, SynthSpec};

fn spec_with(decay: f64, n_speakers: usize, utts: usize) -> SynthSpec {
    SynthSpec {
        n_speakers,
        utterances_per_speaker: utts,
        ssl_sim: Some(SslSim::new(ModelId::Base100h, decay)),
        ..SynthSpec::default()
    }
}

#[test]
fn estimated_pitch_follows_the_f0_law() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n_speakers: 12, utterances_per_speaker: 2, ..SynthSpec::default() };
    let manifest = synth::generate_corpus(&spec, dir.path()).unwrap();
    for e in &manifest.entries {
        let w = read_wav(&dir.path().join(&e.audio_path)).unwrap();
        let est = autocorrelation_f0(&w.samples, 16000.0, 120.0, 450.0);
        let law = spec.f0.f0(e.age, e.gender);
        assert!((est - law).abs() <= 10.0, "{}: estimated {est:.1} Hz, law {law:.1} Hz", e.utterance_id);
    }
}

#[test]
fn corpus_is_bitwise_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = spec_with(0.7, 4, 2);
    let ma = synth::generate_corpus(&spec, a.path()).unwrap();
    let mb = synth::generate_corpus(&spec, b.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(synth::generate_pseudo_ssl(&spec, &ma, &a.path().join("ssl")).unwrap(), 8 * 13);
    synth::generate_pseudo_ssl(&spec, &mb, &b.path().join("ssl")).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path().join("ssl")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        assert_eq!(fs::read(a.path().join("ssl").join(name)).unwrap(), fs::read(b.path().join("ssl").join(name)).unwrap());
    }
    for e in &ma.entries {
        let p = e.audio_path.as_str();
        assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap());
    }
    // every emitted file passes the store's own checks
    for name in names {
        let m = read_features(&a.path().join("ssl").join(name)).unwrap();
        assert_eq!(m.dims(), 768);
    }
}

fn age_means_per_layer(decay: f64) -> Vec<f64> {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_with(decay, 12, 3);
    let manifest = spec.plan_manifest().unwrap();
    synth::generate_pseudo_ssl(&spec, &manifest, dir.path()).unwrap();
    let store = DiskStore::new(dir.path());
    let task = TaskSpec::for_manifest(Task::Age, &manifest);
    let ids: Vec<&str> = manifest.entries.iter().map(|e| e.utterance_id.as_str()).collect();
    (0..13)
        .map(|layer| {
            let mats = store.load_many(&ids, Source::Ssl(ModelId::Base100h), layer).unwrap();
            let labelled: Vec<_> = manifest.entries.iter().map(|e| task.label(e)).zip(mats).collect();
            mean_separation(&group_means(&labelled, task.n_classes))
        })
        .collect()
}

#[test]
fn unit_decay_keeps_class_means_identical() {
    let sep = age_means_per_layer(1.0);
    for s in &sep {
        assert!((s - sep[0]).abs() < 1e-6, "{sep:?}");
    }
    assert!(sep[0] > 1.0);
}

#[test]
fn class_separation_shrinks_by_the_decay_per_layer() {
    let sep = age_means_per_layer(0.7);
    for l in 1..13 {
        let ratio = sep[l] / sep[l - 1];
        assert!((ratio - 0.7).abs() < 1e-3, "layer {l}: ratio {ratio}");
    }
}

#[test]
fn zero_decay_leaves_only_noise_past_layer_zero() {
    let spec = SynthSpec { test_fraction: 0.5, ..spec_with(0.0, 40, 10) };
    let manifest = spec.plan_manifest().unwrap();
    let source = synth::PseudoSslSource { spec: spec.clone(), manifest: manifest.clone() };
    let task = TaskSpec::for_manifest(Task::Age, &manifest);
    let load = |split: Split| {
        let entries: Vec<_> = manifest.split(split).collect();
        let ids: Vec<&str> = entries.iter().map(|e| e.utterance_id.as_str()).collect();
        let x = source.load_many(&ids, Source::Ssl(ModelId::Base100h), 5).unwrap();
        (x, entries.iter().map(|e| task.label(e)).collect::<Vec<_>>())
    };
    let (train_x, train_y) = load(Split::Train);
    let (test_x, test_y) = load(Split::Test);
    let (model, _) = nn::train(&train_x, &train_y, task.n_classes, &TrainConfig { max_epochs: 15, ..TrainConfig::default() }).unwrap();
    let views: Vec<_> = test_x.iter().map(|x| x.view()).collect();
    let preds = model.predict_many(&views, 64).unwrap();
    let acc = preds.iter().zip(&test_y).filter(|(p, y)| p == y).count() as f64 / test_y.len() as f64;
    let chance = 1.0 / task.n_classes as f64;
    assert!((acc - chance).abs() <= 0.1, "accuracy {acc:.3}, chance {chance:.3}");
}
