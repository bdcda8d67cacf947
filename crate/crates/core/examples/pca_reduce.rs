//! Fits PCA on pseudo-SSL training frames and reports retained variance
//! and reconstruction error at several widths.
//!
//! cargo run --release --example pca_reduce

use ndarray::Axis;
use trait_probe::features::ModelId;
use trait_probe::manifest::Split;
use trait_probe::pca::fit_pca_on_matrices;
use trait_probe::synth::{pseudo_ssl_layer, SslSim, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { ssl_sim: Some(SslSim::new(ModelId::Base100h, 0.7)), ..SynthSpec::default() };
    let manifest = spec.plan_manifest()?;
    let mats = pseudo_ssl_layer(&spec, &manifest, 2)?;
    let train: Vec<_> = manifest.entries.iter().zip(&mats).filter(|(e, _)| e.split == Split::Train).map(|(_, m)| m.data.view()).collect();

    let full = fit_pca_on_matrices(&train, 256, 0, "base-100h L2")?;
    let total: f64 = full.eigenvalues.sum();
    let probe = mats[0].data.mapv(f64::from);
    for k in [8, 32, 128, 256] {
        let pca = full.truncated(k)?;
        let kept: f64 = pca.eigenvalues.sum();
        let back = pca.reconstruct(pca.project(probe.view())?.view())?;
        let err = (&back - &probe).mapv(|v| v * v).sum_axis(Axis(1)).mean().unwrap();
        println!("k={k:>3}: {:.1}% of the top-256 variance, mean squared reconstruction error {err:.2}", 100.0 * kept / total);
    }
    Ok(())
}
