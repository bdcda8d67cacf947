//! Writes `.fmx` feature files, scans them back against a manifest and
//! loads them through the disk store.
//!
//! cargo run --example feature_store -- [out_dir]

use std::path::PathBuf;

use trait_probe::features::{read_features, scan_store, write_features, DiskStore, FeatureSource, ModelId, Source, StoreFilter};
use trait_probe::manifest::Split;
use trait_probe::synth::{pseudo_ssl_layer, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trait-probe-store"));
    std::fs::create_dir_all(&dir)?;
    let spec = SynthSpec { n_speakers: 12, utterances_per_speaker: 2, ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let manifest = spec.plan_manifest()?;

    for m in pseudo_ssl_layer(&spec, &manifest, 4)? {
        let path = write_features(&m, &dir)?;
        let back = read_features(&path)?;
        assert_eq!(back, m);
    }
    let source = Source::Ssl(ModelId::Base100h);
    let handles = scan_store(&dir, &manifest, StoreFilter { source, layer: 4, split: Some(Split::Test) })?;
    println!("{} test files for {source} L4 in {}", handles.len(), dir.display());

    let store = DiskStore::new(&dir);
    let ids: Vec<&str> = handles.iter().map(|h| h.utterance_id.as_str()).collect();
    for (id, m) in ids.iter().zip(store.load_many(&ids, source, 4)?) {
        println!("{id}: {} x {}", m.nrows(), m.ncols());
    }
    println!("missing layer 5: {}", store.missing(&ids, source, 5).len());
    Ok(())
}
