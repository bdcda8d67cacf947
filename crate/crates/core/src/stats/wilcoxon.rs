use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Largest effective sample size that uses the exact null distribution.
pub const EXACT_MAX_N: usize = 25;
/// Fewer nonzero differences than this is rejected.
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Signed ranks of `a - b` with zeros dropped. Ranks are doubled so tied
/// (averaged) ranks stay integral. Returns `(doubled_rank, positive)` pairs.
fn doubled_signed_ranks(pairs: &[(f64, f64)]) -> Vec<(u64, bool)> {
    let mut diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut out = Vec::with_capacity(diffs.len());
    let mut i = 0;
    while i < diffs.len() {
        let mut j = i;
        while j + 1 < diffs.len() && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled: (i+1)+(j+1)
        let doubled = (i + j + 2) as u64;
        for d in &diffs[i..=j] {
            out.push((doubled, *d > 0.0));
        }
        i = j + 1;
    }
    out
}

/// Two-sided signed-rank test on the differences `a - b`.
/// Exact when at most [`EXACT_MAX_N`] differences are nonzero.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, StatsError> {
    let n = pairs.iter().filter(|(a, b)| a != b).count();
    let method = if n <= EXACT_MAX_N { WilcoxonMethod::Exact } else { WilcoxonMethod::NormalApprox };
    wilcoxon_with_method(pairs, method)
}

/// As [`wilcoxon_signed_rank`] with the p-value method forced.
pub fn wilcoxon_with_method(pairs: &[(f64, f64)], method: WilcoxonMethod) -> Result<WilcoxonResult, StatsError> {
    if let Some((a, b)) = pairs.iter().find(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite(format!("pair ({a}, {b})")));
    }
    let ranks = doubled_signed_ranks(pairs);
    let n = ranks.len();
    if n == 0 {
        return Err(StatsError::AllZeroDifferences);
    }
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs { n_effective: n, needed: MIN_PAIRS });
    }
    if method == WilcoxonMethod::Exact && n > EXACT_MAX_N {
        return Err(StatsError::InvalidArgument(format!("exact test limited to n <= {EXACT_MAX_N}, got {n}")));
    }
    let total2: u64 = ranks.iter().map(|r| r.0).sum();
    let plus2: u64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    let p_value = match method {
        WilcoxonMethod::Exact => exact_p(&ranks, plus2, total2),
        WilcoxonMethod::NormalApprox => normal_p(&ranks, plus2 as f64 / 2.0),
    };
    Ok(WilcoxonResult {
        w_plus: plus2 as f64 / 2.0,
        w_minus: (total2 - plus2) as f64 / 2.0,
        n_effective: n,
        p_value,
        method,
    })
}

/// P(|W+ - mean| >= |observed - mean|) under random signs, by counting sign
/// assignments per attainable doubled rank sum.
fn exact_p(ranks: &[(u64, bool)], plus2: u64, total2: u64) -> f64 {
    let mut counts = vec![0u64; total2 as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &(r, _) in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let observed = (2 * plus2 as i64 - total2 as i64).abs();
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total2 as i64).abs() >= observed)
        .map(|(_, c)| c)
        .sum();
    (hits as f64 / (1u64 << ranks.len()) as f64).min(1.0)
}

fn normal_p(ranks: &[(u64, bool)], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let t = ranks[i..].iter().take_while(|r| r.0 == ranks[i].0).count();
        tie_term += (t * t * t - t) as f64;
        i += t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * (1.0 - std.cdf(z))).clamp(f64::MIN_POSITIVE, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_diffs(d: &[f64]) -> Vec<(f64, f64)> {
        d.iter().map(|&x| (x, 0.0)).collect()
    }

    #[test]
    fn hand_ranked_example() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, -2.0, 4.0, 4.0])).unwrap();
        assert_eq!((r.w_plus, r.w_minus, r.n_effective), (12.5, 2.5, 5));
        assert_eq!(r.method, WilcoxonMethod::Exact);
        // doubled ranks 2,5,5,9,9 (total 30); |2S-30| >= 20 for S in {0,2,25,23,...}
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn all_positive_five_is_minimal() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!(r.p_value, 2.0 / 32.0);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = wilcoxon_signed_rank(&from_diffs(&[0.0, 1.0, 0.0, -3.0, 2.0, 5.0, 4.0])).unwrap();
        assert_eq!(r.n_effective, 5);
        assert_eq!(r.w_plus + r.w_minus, 15.0);
    }

    #[test]
    fn errors() {
        let same = vec![(0.5, 0.5); 8];
        assert!(matches!(wilcoxon_signed_rank(&same), Err(StatsError::AllZeroDifferences)));
        assert!(matches!(
            wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, 0.0])),
            Err(StatsError::TooFewPairs { n_effective: 2, .. })
        ));
        assert!(wilcoxon_signed_rank(&[(f64::NAN, 1.0); 6]).is_err());
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&from_diffs(&d)).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApprox);
        assert_eq!(r.w_minus, 0.0);
        assert!(r.p_value < 1e-5);
    }
}
