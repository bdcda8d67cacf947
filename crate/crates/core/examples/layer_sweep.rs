//! Layer sweep over a synthetic corpus with pseudo-SSL features.
//!
//! Generates audio for 400 utterances, extracts MFCCs, simulates 13 layers
//! of 768-dim features whose class signal decays by 0.7 per layer, then
//! probes every layer and the MFCC baseline.
//!
//! cargo run --release --example layer_sweep -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use trait_probe::audio::{mfcc_for_manifest, MfccConfig};
use trait_probe::features::{MemoryStore, ModelId, RoutedSource};
use trait_probe::manifest::Task;
use trait_probe::sweep::{render_report, run_layer_sweep, SweepPlan, SystemSpec};
use trait_probe::synth::{generate_corpus, PseudoSslSource, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trait-probe-layer-sweep"));

    let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let manifest = generate_corpus(&spec, &out.join("corpus"))?;

    let mut mfcc = MemoryStore::new();
    for m in mfcc_for_manifest(&manifest, &out.join("corpus"), &MfccConfig::default())? {
        mfcc.insert(m)?;
    }
    let ssl = PseudoSslSource { spec: spec.clone(), manifest: manifest.clone() };
    let features = RoutedSource { mfcc: &mfcc, ssl: &ssl };

    let mut plan = SweepPlan::new(Task::Age);
    plan.systems.push(SystemSpec::all_layers(ModelId::Base100h));
    let start = Instant::now();
    let report = run_layer_sweep(&manifest, &features, &plan)?;
    println!("sweep took {:.1}s", start.elapsed().as_secs_f64());

    for r in &report.rows {
        let acc = r.accuracy().map_or("failed".to_string(), |a| format!("{a:.3}"));
        println!("{:<10} layer {:>3} accuracy {acc}{}", r.model, r.layer.map_or("-".into(), |l| l.to_string()), if r.is_best { "  *" } else { "" });
    }
    for c in &report.comparisons {
        match &c.result {
            Some(w) => println!("{} vs mfcc: W+={} W-={} p={:.3e}", c.model, w.w_plus, w.w_minus, w.p_value),
            None => println!("{} vs mfcc: {}", c.model, c.note.as_deref().unwrap_or("")),
        }
    }
    for path in render_report(&report, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
