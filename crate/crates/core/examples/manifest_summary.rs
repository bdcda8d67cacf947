//! Loads a manifest and prints per-split speaker and utterance counts.
//!
//! Without an argument a synthetic manifest is planned in memory.
//!
//! cargo run --example manifest_summary -- [manifest.txt]

use std::path::Path;

use trait_probe::manifest::{load_manifest, summarize, Task, TaskSpec};
use trait_probe::synth::SynthSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest = match std::env::args().nth(1) {
        Some(path) => load_manifest(Path::new(&path))?,
        None => SynthSpec::default().plan_manifest()?,
    };
    print!("{}", summarize(&manifest));
    for task in [Task::Age, Task::Gender] {
        println!("{task}: {} classes", TaskSpec::for_manifest(task, &manifest).n_classes);
    }
    Ok(())
}
