//! Layer-wise probing of self-supervised speech representations for
//! age and gender classification.
//!
//! The crate covers the whole probing pipeline: dataset manifests, the MFCC
//! baseline, the `.fmx` feature store, a fixed 1D CNN probe with hand-derived
//! gradients, PCA reduction, classification metrics with a Wilcoxon
//! signed-rank test, a synthetic corpus generator, and sweep orchestration
//! that renders CSV tables and SVG plots.

pub mod audio;
pub mod cli;
pub mod features;
pub mod manifest;
pub mod nn;
pub mod pca;
pub mod stats;
pub mod synth;
pub mod sweep;
