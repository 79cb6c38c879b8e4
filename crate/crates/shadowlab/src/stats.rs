//! Shared statistical helpers: binomial proportion intervals and
//! goodness-of-fit thresholds.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Wilson score interval for a binomial proportion.
///
/// Behaves correctly near 0 and 1, where the estimated probabilities in
/// this crate live.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the exact endpoints the bounds are analytically 0 and 1; avoid
    // returning 1-ulp artifacts there.
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Two-sided standard-normal quantile for a confidence level,
/// e.g. 0.95 -> 1.96.
pub fn z_for_confidence(confidence: f64) -> f64 {
    assert!((0.0..1.0).contains(&confidence));
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.inverse_cdf(0.5 + confidence / 2.0)
}

/// Chi-square critical value: the statistic exceeds this with
/// probability `significance` under the null.
pub fn chi_square_critical(df: f64, significance: f64) -> f64 {
    ChiSquared::new(df).unwrap().inverse_cdf(1.0 - significance)
}

/// Chi-square statistic for per-index fair-bit counts: each index
/// contributes one degree of freedom.
pub fn chi_square_fair_bits(ones: &[u64], trials: u64) -> f64 {
    let n = trials as f64;
    let expected = n / 2.0;
    ones.iter()
        .map(|&o| {
            let dev = o as f64 - expected;
            // variance n/4 for a fair bit
            dev * dev / (n / 4.0)
        })
        .sum()
}

/// Chi-square statistic for adjacent-pair joint counts against the
/// "independent fair bits" null: each 4-cell table contributes three
/// degrees of freedom.
pub fn chi_square_pair_counts(cells: &[[u64; 4]], trials: u64) -> f64 {
    let expected = trials as f64 / 4.0;
    cells
        .iter()
        .flat_map(|c| c.iter())
        .map(|&o| {
            let dev = o as f64 - expected;
            dev * dev / expected
        })
        .sum()
}

/// Asymptotic Kolmogorov-Smirnov critical value at the given
/// significance: `sqrt(ln(2/alpha) / (2n))`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
