//! Trains the CNN probe on one pseudo-SSL layer and scores it on the test split.
//!
//! cargo run --release --example train_probe -- [layer]

use trait_probe::features::ModelId;
use trait_probe::manifest::{Split, Task, TaskSpec};
use trait_probe::nn::{train, TrainConfig};
use trait_probe::stats::compute_metrics;
use trait_probe::synth::{pseudo_ssl_layer, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layer: i16 = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let manifest = spec.plan_manifest()?;
    let task = TaskSpec::for_manifest(Task::Age, &manifest);
    let mats = pseudo_ssl_layer(&spec, &manifest, layer)?;

    let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
    for (e, m) in manifest.entries.iter().zip(mats) {
        let (x, y) = if e.split == Split::Train { (&mut train_x, &mut train_y) } else { (&mut test_x, &mut test_y) };
        x.push(m.data);
        y.push(task.label(e));
    }
    let cfg = TrainConfig { max_epochs: 20, ..TrainConfig::default() };
    let (model, trace) = train(&train_x, &train_y, task.n_classes, &cfg)?;
    for s in &trace.epochs {
        println!("epoch {:>2}: loss {:.4}, val accuracy {:.3}", s.epoch, s.train_loss, s.val_accuracy);
    }
    let views: Vec<_> = test_x.iter().map(|x| x.view()).collect();
    let preds = model.predict_many(&views, 64)?;
    let pairs: Vec<_> = test_y.into_iter().zip(preds).collect();
    let report = compute_metrics(&pairs, task.n_classes)?;
    println!("layer {layer}, best epoch {}: accuracy {:.3}, macro F1 {:.3}", trace.best_epoch, report.accuracy, report.f1);
    Ok(())
}
