use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use super::StatsError;

/// How paired scores are drawn from a shared test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub n_subsamples: usize,
    pub fraction: f64,
    pub seed: u64,
}

impl Default for PairingSpec {
    fn default() -> Self {
        PairingSpec { n_subsamples: 30, fraction: 0.8, seed: 0 }
    }
}

/// Paired `(candidate, baseline)` accuracies over seeded subsets of the test
/// set. Each subset is drawn without replacement; both systems see the same
/// indices.
pub fn paired_accuracies(baseline: &[bool], candidate: &[bool], spec: &PairingSpec) -> Result<Vec<(f64, f64)>, StatsError> {
    if baseline.len() != candidate.len() {
        return Err(StatsError::InvalidArgument(format!(
            "baseline scored {} utterances, candidate {}",
            baseline.len(),
            candidate.len()
        )));
    }
    if baseline.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(spec.fraction > 0.0 && spec.fraction <= 1.0) || spec.n_subsamples == 0 {
        return Err(StatsError::InvalidArgument(format!("{spec:?}")));
    }
    let n = baseline.len();
    let size = ((n as f64 * spec.fraction).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_subsamples);
    for _ in 0..spec.n_subsamples {
        let idx = index::sample(&mut rng, n, size);
        let (mut b, mut c) = (0usize, 0usize);
        for i in idx.iter() {
            b += baseline[i] as usize;
            c += candidate[i] as usize;
        }
        out.push((c as f64 / size as f64, b as f64 / size as f64));
    }
    Ok(out)
}

/// Signed-rank test of candidate minus baseline accuracy. Inputs are
/// per-utterance correctness over the identical, identically ordered test set.
pub fn compare_to_baseline(baseline: &[bool], candidate: &[bool], spec: &PairingSpec) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank(&paired_accuracies(baseline, candidate, spec)?)
}
