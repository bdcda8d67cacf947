//! PCA sweep on the best pseudo-SSL layer: one probe per width plus the
//! unreduced control, rendered to CSV and SVG.
//!
//! cargo run --release --example pca_sweep -- [out_dir] [layer]

use std::path::PathBuf;

use trait_probe::features::ModelId;
use trait_probe::manifest::Task;
use trait_probe::sweep::{render_report, run_pca_sweep, PcaPlan, SweepPlan};
use trait_probe::synth::{PseudoSslSource, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trait-probe-pca-sweep"));
    let layer: i16 = args.next().map_or(Ok(0), |s| s.parse())?;

    let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let manifest = spec.plan_manifest()?;
    let ssl = PseudoSslSource { spec, manifest: manifest.clone() };

    let mut plan = SweepPlan::new(Task::Age);
    plan.include_mfcc = false;
    plan.pca = Some(PcaPlan { best_layers: vec![(ModelId::Base100h, layer)], ks: None });
    let report = run_pca_sweep(&manifest, &ssl, &plan)?;
    for r in &report.rows {
        let k = r.k.map_or("none".to_string(), |k| k.to_string());
        let acc = r.accuracy().map_or_else(|| r.error.clone().unwrap_or_default(), |a| format!("{a:.3}"));
        println!("k={k:>4}  {acc}{}", if r.is_best { "  *" } else { "" });
    }
    for path in render_report(&report, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
