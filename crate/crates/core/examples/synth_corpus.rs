//! Generates a small synthetic child-speech corpus with pseudo-SSL features.
//!
//! cargo run --release --example synth_corpus -- [out_dir]

use std::path::PathBuf;

use trait_probe::features::ModelId;
use trait_probe::manifest::summarize;
use trait_probe::synth::{generate_corpus, generate_pseudo_ssl, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trait-probe-synth"));
    let spec = SynthSpec {
        n_speakers: 12,
        utterances_per_speaker: 4,
        ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)),
        ..SynthSpec::default()
    };
    let manifest = generate_corpus(&spec, &out)?;
    let n = generate_pseudo_ssl(&spec, &manifest, &out.join("features"))?;
    print!("{}", summarize(&manifest));
    for age in &spec.ages {
        println!("age {age}: vocal tract factor {:.3}", spec.vocal_tract_factor(*age));
    }
    println!("{} utterances and {n} feature files under {}", manifest.entries.len(), out.display());
    Ok(())
}
