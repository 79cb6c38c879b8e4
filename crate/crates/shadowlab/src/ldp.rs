//! Large-deviation machinery for the Birkhoff log-sums.
//!
//! The log multiplier of a depth-`t` table at a product-measure point is
//! a bounded random variable taking each of its `2^(2t+1)` values with
//! equal probability, and points `2t+1` apart are independent. Deviation
//! probabilities of the sums therefore obey a Cramér bound whose rate
//! function is the Legendre transform of the log moment generating
//! function,
//!
//! ```text
//! I(x) = sup_theta [ theta x - ln M(theta) ],
//! M(theta) = 2^-(2t+1) * sum_patterns value^theta,
//! ```
//!
//! two-sided via the smaller of the rates at `a +/- eps`. A quadratic
//! minorant of the rate yields explicit tail constants `(C, k)` with
//!
//! ```text
//! P(|A_j / j - a| >= eps) <= C e^{-k eps^2 j},
//! ```
//!
//! certified here by Chernoff evaluations rather than asymptotics, and
//! those constants in turn give the exponent threshold
//! `1 - 1/(2 k a)` for的 scaling sweep. Empirical estimators along exact
//! orbits and along symbolic pseudotrajectories validate the bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::LambdaTable;
use crate::error::{Error, Result};
use crate::pseudo::generate_symbolic;
use crate::stats::{wilson_interval, z_for_confidence};
use crate::symbolic::sample_point;

/// Infinity-tolerant float field: JSON has no literal for infinities, so
/// they serialize as null.
mod maybe_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Same as [`maybe_inf`] for a vector of floats.
mod maybe_inf_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(
            v.iter()
                .map(|x| if x.is_finite() { Some(*x) } else { None }),
        )
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|o| o.unwrap_or(f64::INFINITY))
            .collect())
    }
}

/// One sampled point of the block rate function; an infinite rate marks
/// a deviation outside the support of the block variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub eps: f64,
    #[serde(with = "maybe_inf")]
    pub rate: f64,
}

/// Fitted large-deviation model of a multiplier table: the exact mean,
/// sampled rate function, tail constants, and the exponent threshold
/// they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateModel {
    /// Exact expectation of the log multiplier (negative).
    pub a: f64,
    /// Depth of the (possibly compressed) table the rates refer to.
    pub t: u32,
    /// Optimizing transform parameter for each rate sample (diagnostic).
    #[serde(with = "maybe_inf_vec")]
    pub theta_grid: Vec<f64>,
    /// Sampled `(eps, I(eps))` pairs of the two-sided block rate.
    pub rate_samples: Vec<RateSample>,
    /// Tail prefactor; at least 1.
    pub c: f64,
    /// Tail exponent coefficient; infinite for deterministic tables.
    #[serde(with = "maybe_inf")]
    pub k: f64,
    /// `1 - 1/(2 k a)`: exponents strictly above this make the scaling
    /// sweep succeed.
    pub gamma_min: f64,
}

/// One-sided Cramér rate at target `x >= mean`, plus the optimizing
/// parameter. Solved by bracketed bisection on the stationarity
/// condition (the objective is concave in theta).
fn cramer_rate_upper(logs: &[f64], x: f64) -> (f64, f64) {
    let n = logs.len() as f64;
    let y_max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = logs.iter().sum::<f64>() / n;
    debug_assert!(x >= mean - 1e-12);
    if x > y_max {
        return (f64::INFINITY, f64::INFINITY);
    }
    // derivative of ln M at theta
    let psi_prime = |theta: f64| -> f64 {
        let m = logs
            .iter()
            .map(|&l| theta * l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for &l in logs {
            let e = (theta * l - m).exp();
            num += l * e;
            den += e;
        }
        num / den
    };
    let objective = |theta: f64| -> f64 {
        let m = logs
            .iter()
            .map(|&l| theta * l)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|&l| (theta * l - m).exp()).sum();
        theta * x - (m + (sum / n).ln())
    };
    if x <= mean {
        return (0.0, 0.0);
    }
    // expand the bracket until the derivative crosses the target
    let mut hi = 1.0f64;
    while psi_prime(hi) < x && hi < 1e9 {
        hi *= 2.0;
    }
    if psi_prime(hi) < x {
        // target indistinguishable from the support edge
        let count = logs.iter().filter(|&&l| l >= y_max - 1e-12).count();
        return ((n / count as f64).ln(), f64::INFINITY);
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi_prime(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + hi) {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    (objective(theta), theta)
}

/// Two-sided block rate of the table's log value at deviation `eps`
/// from the mean: `min(I(a + eps), I(a - eps))`, infinite when the
/// deviation exceeds the support on both sides.
pub fn block_rate(table: &LambdaTable, eps: f64) -> Result<f64> {
    Ok(block_rate_with_theta(table, eps)?.0)
}

fn block_rate_with_theta(table: &LambdaTable, eps: f64) -> Result<(f64, f64)> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameters(format!(
            "deviation eps={eps} must be nonnegative"
        )));
    }
    let logs = table.log_values();
    let a = table.expected_log();
    if eps == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (up, theta_up) = cramer_rate_upper(logs, a + eps);
    let neg: Vec<f64> = logs.iter().map(|&l| -l).collect();
    let (down, theta_down) = cramer_rate_upper(&neg, -(a - eps));
    Ok(if up <= down {
        (up, theta_up)
    } else {
        (down, -theta_down)
    })
}

/// Quadratic tail constants from sampled rates: `k0` is the infimum of
/// `I(eps)/eps^2` over the grid, the block phases contribute the factor
/// `2t+1` to the prefactor and `1/(4t+2)` to the exponent (the depth-0
/// case has a single exact phase, so no correction), and the prefactor
/// is raised until the per-phase Chernoff sums stay below the bound for
/// every sampled deviation and every block count from `j_min` up.
pub fn fit_quadratic_constants(
    samples: &[RateSample],
    depth: u32,
    j_min: usize,
) -> Result<(f64, f64)> {
    let finite: Vec<&RateSample> = samples.iter().filter(|s| s.rate.is_finite()).collect();
    if finite.is_empty() {
        // deterministic block variable: deviations are impossible
        return Ok((1.0, f64::INFINITY));
    }
    let k0 = finite
        .iter()
        .map(|s| s.rate / (s.eps * s.eps))
        .fold(f64::INFINITY, f64::min);
    if !(k0 > 0.0 && k0.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "degenerate quadratic minorant k0 = {k0}"
        )));
    }
    let phases = 2 * depth as usize + 1;
    let k = if depth == 0 {
        k0
    } else {
        k0 / (4.0 * depth as f64 + 2.0)
    };
    let mut c0: f64 = 1.0;
    let mut js: Vec<usize> = (j_min..j_min + 64).collect();
    let mut j = j_min.max(1) as f64;
    while j < 1e6 {
        j *= 1.5;
        js.push(j as usize);
    }
    for s in &finite {
        let e2 = s.eps * s.eps;
        for &jj in &js {
            // log of sum_q 2 exp(-m_q I) relative to exp(-k eps^2 j)
            let mut terms: Vec<f64> = Vec::with_capacity(phases);
            for q in 0..phases {
                if jj <= q {
                    continue;
                }
                let m_q = (jj - q) / phases;
                if m_q == 0 {
                    continue;
                }
                terms.push(std::f64::consts::LN_2 + k * e2 * jj as f64 - m_q as f64 * s.rate);
            }
            if terms.is_empty() {
                continue;
            }
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let needed = ((mx + terms.iter().map(|&t| (t - mx).exp()).sum::<f64>().ln()).exp())
                / phases as f64;
            c0 = c0.max(needed);
        }
    }
    Ok(((phases as f64) * c0, k))
}

/// The exponent threshold implied by the tail constants:
/// `1 - 1/(2 k a)`, strictly above 1 for finite `k` and reaching 1 in
/// the deterministic limit.
pub fn gamma_threshold(k: f64, a: f64) -> Result<f64> {
    if !(a < 0.0) {
        return Err(Error::InvalidParameters(format!(
            "mean log multiplier a={a} must be negative"
        )));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "tail coefficient k={k} must be positive"
        )));
    }
    Ok(1.0 - 1.0 / (2.0 * k * a))
}

/// Samples the block rate on a grid and fits the tail constants.
///
/// `tilde_depth`, when below the table's own depth, first compresses the
/// table (the deviation analysis only needs the compressed profile); by
/// default the table itself is the block variable. The deviation grid
/// spans `(0, eps_max]` with `eps_max` defaulting to `|a| / 2`.
pub fn build_rate_model(
    table: &LambdaTable,
    eps_max: Option<f64>,
    grid_points: usize,
    j_min: usize,
    tilde_depth: Option<u32>,
) -> Result<RateModel> {
    let a = table.expected_log();
    if a == 0.0 {
        return Err(Error::InvalidModel(
            "mean log multiplier is zero; no deviation analysis applies".into(),
        ));
    }
    if a > 0.0 {
        return Err(Error::InvalidModel(
            "mean log multiplier is positive; analyze the inverted table".into(),
        ));
    }
    if grid_points == 0 {
        return Err(Error::InvalidParameters("empty rate grid".into()));
    }
    let tilde = match tilde_depth {
        Some(td) if td < table.depth() => table.compress(td)?,
        _ => table.clone(),
    };
    let eps_max = eps_max.unwrap_or(-a / 2.0);
    if !(eps_max > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "eps_max {eps_max} must be positive"
        )));
    }
    let mut rate_samples = Vec::with_capacity(grid_points);
    let mut theta_grid = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let eps = eps_max * (i + 1) as f64 / grid_points as f64;
        let (rate, theta) = block_rate_with_theta(&tilde, eps)?;
        rate_samples.push(RateSample { eps, rate });
        theta_grid.push(theta);
    }
    let (c, k) = fit_quadratic_constants(&rate_samples, tilde.depth(), j_min)?;
    let gamma_min = gamma_threshold(k, a)?;
    Ok(RateModel {
        a,
        t: tilde.depth(),
        theta_grid,
        rate_samples,
        c,
        k,
        gamma_min,
    })
}

impl RateModel {
    /// The fitted tail bound `C e^{-k eps^2 j}`.
    pub fn tail_bound(&self, eps: f64, j: usize) -> f64 {
        if self.k.is_infinite() {
            return if eps > 0.0 { 0.0 } else { self.c };
        }
        self.c * (-self.k * eps * eps * j as f64).exp()
    }
}

/// A Monte Carlo deviation probability with its confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct DeviationEstimate {
    pub deviations: u64,
    pub trials: u64,
    pub p_hat: f64,
    /// Wilson interval at 95% confidence.
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl DeviationEstimate {
    fn from_counts(deviations: u64, trials: u64) -> Self {
        let (lo, hi) = wilson_interval(deviations, trials, z_for_confidence(0.95));
        DeviationEstimate {
            deviations,
            trials,
            p_hat: deviations as f64 / trials as f64,
            wilson_lo: lo,
            wilson_hi: hi,
        }
    }

    /// Wilson interval at an arbitrary confidence level.
    pub fn wilson(&self, confidence: f64) -> (f64, f64) {
        wilson_interval(self.deviations, self.trials, z_for_confidence(confidence))
    }
}

fn validate_mc(trials: u64, js: &[usize]) -> Result<()> {
    if trials < 100 {
        return Err(Error::InvalidParameters(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    if js.is_empty() || js.contains(&0) {
        return Err(Error::InvalidParameters(
            "deviation horizons must be positive".into(),
        ));
    }
    Ok(())
}

/// Empirical deviation probabilities of the Birkhoff mean along exact
/// orbits of product-measure points, on a grid of horizons and
/// deviations: one set of `trials` orbits serves every `(j, eps)` cell.
pub fn deviation_profile_exact<R: Rng + ?Sized>(
    table: &LambdaTable,
    js: &[usize],
    epsilons: &[f64],
    trials: u64,
    rng: &mut R,
) -> Result<Vec<Vec<DeviationEstimate>>> {
    validate_mc(trials, js)?;
    let a = table.expected_log();
    let t = i64::from(table.depth());
    let j_max = *js.iter().max().unwrap();
    let mut counts = vec![vec![0u64; epsilons.len()]; js.len()];
    for _ in 0..trials {
        let w = sample_point(-t, j_max as i64 - 1 + t, rng)?;
        let mut acc = 0.0f64;
        let mut next = 0usize;
        let mut sorted: Vec<(usize, usize)> = js.iter().cloned().enumerate().collect();
        sorted.sort_by_key(|&(_, j)| j);
        for p in 0..j_max {
            acc += table.log_eval_at(&w, p as i64)?;
            while next < sorted.len() && sorted[next].1 == p + 1 {
                let (row, j) = sorted[next];
                let dev = (acc / j as f64 - a).abs();
                for (col, &eps) in epsilons.iter().enumerate() {
                    if dev >= eps {
                        counts[row][col] += 1;
                    }
                }
                next += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| DeviationEstimate::from_counts(c, trials))
                .collect()
        })
        .collect())
}

/// Same profile along symbolic pseudotrajectories of the shift: the
/// sums read the table at the trajectory points instead of the shifted
/// start. Requires `d` below the table's resolution,
/// `d < 2^-(t+1)`.
pub fn deviation_profile_pseudo<R: Rng + ?Sized>(
    table: &LambdaTable,
    d: f64,
    js: &[usize],
    epsilons: &[f64],
    trials: u64,
    rng: &mut R,
) -> Result<Vec<Vec<DeviationEstimate>>> {
    validate_mc(trials, js)?;
    let bound = f64::powi(2.0, -(table.depth() as i32 + 1));
    if !(d > 0.0 && d < 1.0 && d < bound) {
        return Err(Error::InvalidPerturbation {
            d,
            depth: table.depth(),
        });
    }
    let a = table.expected_log();
    let n = crate::symbolic::agreement_radius(d)? as i64;
    let w_half = n.max(i64::from(table.depth())) + 1;
    let j_max = *js.iter().max().unwrap();
    let mut sorted: Vec<(usize, usize)> = js.iter().cloned().enumerate().collect();
    sorted.sort_by_key(|&(_, j)| j);
    let mut counts = vec![vec![0u64; epsilons.len()]; js.len()];
    for _ in 0..trials {
        let w0 = sample_point(-w_half, w_half, rng)?;
        let ws = generate_symbolic(w0, d, j_max, rng)?;
        let mut acc = 0.0f64;
        let mut next = 0usize;
        for (p, w) in ws.iter().enumerate() {
            acc += table.log_eval(w)?;
            while next < sorted.len() && sorted[next].1 == p + 1 {
                let (row, j) = sorted[next];
                let dev = (acc / j as f64 - a).abs();
                for (col, &eps) in epsilons.iter().enumerate() {
                    if dev >= eps {
                        counts[row][col] += 1;
                    }
                }
                next += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| DeviationEstimate::from_counts(c, trials))
                .collect()
        })
        .collect())
}

/// Deviation probability of the Birkhoff mean at a single horizon along
/// exact orbits.
pub fn empirical_deviation_exact<R: Rng + ?Sized>(
    table: &LambdaTable,
    j: usize,
    eps: f64,
    trials: u64,
    rng: &mut R,
) -> Result<DeviationEstimate> {
    Ok(deviation_profile_exact(table, &[j], &[eps], trials, rng)?[0][0])
}

/// Deviation probability at a single horizon along symbolic
/// pseudotrajectories.
pub fn empirical_deviation_pseudo<R: Rng + ?Sized>(
    table: &LambdaTable,
    d: f64,
    j: usize,
    eps: f64,
    trials: u64,
    rng: &mut R,
) -> Result<DeviationEstimate> {
    Ok(deviation_profile_pseudo(table, d, &[j], &[eps], trials, rng)?[0][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn two_sided_oracle(table: &LambdaTable, eps: f64) -> f64 {
        let l0 = table.log_values()[0];
        let l1 = table.log_values()[1];
        let a = table.expected_log();
        oracle::two_point_rate(l0, l1, a + eps).min(oracle::two_point_rate(l0, l1, a - eps))
    }

    #[test]
    fn rate_vanishes_at_mean() {
        let t = LambdaTable::contracting_example();
        assert_eq!(block_rate(&t, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rate_infinite_beyond_support() {
        let t = LambdaTable::contracting_example();
        // max deviation above the mean is ln 2 - a ~ 0.896
        assert!(block_rate(&t, 0.9).unwrap().is_infinite());
        assert!(block_rate(&t, 0.8958).unwrap().is_finite());
    }

    #[test]
    fn rate_matches_two_point_closed_form() {
        let t = LambdaTable::contracting_example();
        for eps in [0.05, 0.1, 0.2, 0.4, 0.6, 0.85] {
            let legendre = block_rate(&t, eps).unwrap();
            let closed = two_sided_oracle(&t, eps);
            assert_relative_eq!(legendre, closed, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn rate_is_monotone_on_grid() {
        let t = LambdaTable::contracting_example();
        let mut prev = 0.0;
        for i in 1..=60 {
            let eps = 0.88 * i as f64 / 60.0;
            let r = block_rate(&t, eps).unwrap();
            assert!(r >= prev - 1e-12, "rate not monotone at eps={eps}");
            prev = r;
        }
    }

    #[test]
    fn fit_constant_table_degenerates() {
        let t = LambdaTable::constant(0, 0.5).unwrap();
        let model = build_rate_model(&t, None, 16, 10, None).unwrap();
        assert!(model.k.is_infinite());
        assert_eq!(model.c, 1.0);
        assert_eq!(model.gamma_min, 1.0);
        assert_eq!(model.tail_bound(0.1, 100), 0.0);
    }

    #[test]
    fn fit_depth_zero_has_no_blocking_correction() {
        let t = LambdaTable::contracting_example();
        let model = build_rate_model(&t, None, 64, 10, None).unwrap();
        let k0 = model
            .rate_samples
            .iter()
            .filter(|s| s.rate.is_finite())
            .map(|s| s.rate / (s.eps * s.eps))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(model.k, k0, max_relative = 1e-12);
        // the quadratic minorant property on the sampled grid
        for s in &model.rate_samples {
            assert!(s.rate >= model.k * s.eps * s.eps - 1e-12);
        }
    }

    #[test]
    fn fitted_bound_dominates_exact_binomial_tail() {
        let t = LambdaTable::contracting_example();
        let model = build_rate_model(&t, None, 64, 10, None).unwrap();
        let l0 = t.log_values()[0];
        let l1 = t.log_values()[1];
        let a = t.expected_log();
        for i in 1..=16 {
            let eps = (-a / 2.0) * i as f64 / 16.0;
            for j in [10usize, 100, 1000] {
                let exact = oracle::binomial_two_value_tail(j, l0, l1, a, eps);
                let bound = model.tail_bound(eps, j);
                assert!(
                    exact <= bound,
                    "exact tail {exact} exceeds bound {bound} at eps={eps} j={j}"
                );
            }
        }
    }

    #[test]
    fn gamma_threshold_examples() {
        assert_relative_eq!(gamma_threshold(1.0, -0.2).unwrap(), 3.5);
        assert!((gamma_threshold(1e9, -0.2).unwrap() - 1.0).abs() < 1e-6);
        assert!(gamma_threshold(1.0, 0.2).is_err());
        assert!(gamma_threshold(0.0, -0.2).is_err());
        assert!(gamma_threshold(f64::INFINITY, -0.2).unwrap() == 1.0);
    }

    #[test]
    fn gamma_consistency_with_model_fields() {
        let t = LambdaTable::contracting_example();
        let model = build_rate_model(&t, None, 64, 10, None).unwrap();
        assert_relative_eq!(
            model.gamma_min,
            1.0 - 1.0 / (2.0 * model.k * model.a),
            max_relative = 1e-14
        );
        assert!(model.gamma_min > 1.0);
    }

    #[test]
    fn empirical_exact_edge_cases() {
        let t = LambdaTable::contracting_example();
        let mut r = rng(1);
        let e0 = empirical_deviation_exact(&t, 50, 0.0, 200, &mut r).unwrap();
        assert_eq!(e0.p_hat, 1.0);
        let far = empirical_deviation_exact(&t, 50, 2.0, 200, &mut r).unwrap();
        assert_eq!(far.p_hat, 0.0);
    }

    #[test]
    fn empirical_exact_matches_binomial_tail() {
        let t = LambdaTable::contracting_example();
        let mut r = rng(2);
        let j = 100;
        let eps = 0.1;
        let est = empirical_deviation_exact(&t, j, eps, 20_000, &mut r).unwrap();
        let exact = oracle::binomial_two_value_tail(
            j,
            t.log_values()[0],
            t.log_values()[1],
            t.expected_log(),
            eps,
        );
        assert!(
            est.wilson_lo <= exact && exact <= est.wilson_hi,
            "exact {exact} outside Wilson interval [{}, {}]",
            est.wilson_lo,
            est.wilson_hi
        );
    }

    #[test]
    fn empirical_pseudo_respects_fitted_bound() {
        let t = LambdaTable::contracting_example();
        let model = build_rate_model(&t, None, 64, 10, None).unwrap();
        let mut r = rng(3);
        let j = 200;
        let eps = 0.1;
        let est = empirical_deviation_pseudo(&t, 0.1, j, eps, 20_000, &mut r).unwrap();
        let (lo99, _) = est.wilson(0.99);
        assert!(
            lo99 <= model.tail_bound(eps, j),
            "pseudo deviation {} exceeds bound {}",
            est.p_hat,
            model.tail_bound(eps, j)
        );
    }

    #[test]
    fn empirical_pseudo_requires_small_d() {
        let t = LambdaTable::contracting_example();
        let mut r = rng(4);
        assert!(matches!(
            empirical_deviation_pseudo(&t, 0.6, 10, 0.1, 200, &mut r),
            Err(Error::InvalidPerturbation { .. })
        ));
    }

    #[test]
    fn pseudo_matches_exact_at_small_d() {
        // far below the resolution the pseudo chain reads the same
        // table values as an exact orbit at depth 0
        let t = LambdaTable::contracting_example();
        let mut r = rng(5);
        let j = 60;
        let eps = 0.15;
        let a = empirical_deviation_exact(&t, j, eps, 20_000, &mut r).unwrap();
        let b = empirical_deviation_pseudo(&t, 1e-6, j, eps, 20_000, &mut r).unwrap();
        // joint confidence bands overlap
        assert!(
            a.wilson_lo <= b.wilson_hi && b.wilson_lo <= a.wilson_hi,
            "estimates too far apart: [{},{}] vs [{},{}]",
            a.wilson_lo,
            a.wilson_hi,
            b.wilson_lo,
            b.wilson_hi
        );
    }

    #[test]
    fn rate_model_json_roundtrip_bit_exact() {
        let t = LambdaTable::contracting_example();
        // wide grid so some samples land outside the support -> infinite
        let model = build_rate_model(&t, Some(1.2), 24, 10, None).unwrap();
        assert!(model.rate_samples.iter().any(|s| s.rate.is_infinite()));
        let json = serde_json::to_string_pretty(&model).unwrap();
        let back: RateModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn model_rejects_expanding_and_symmetric_tables() {
        let expanding = LambdaTable::new(0, vec![3.0, 1.0]).unwrap();
        assert!(build_rate_model(&expanding, None, 8, 10, None).is_err());
        let symmetric = LambdaTable::new(0, vec![2.0, 0.5]).unwrap();
        assert!(build_rate_model(&symmetric, None, 8, 10, None).is_err());
    }

    #[test]
    fn model_compresses_deeper_sources() {
        let mut r = rng(6);
        let deep = LambdaTable::random_log_uniform(2, -0.8, -0.65, &mut r).unwrap();
        let model = build_rate_model(&deep, None, 16, 10, Some(1)).unwrap();
        assert_eq!(model.t, 1);
        assert_relative_eq!(model.a, deep.expected_log(), max_relative = 1e-14);
        // blocking correction active at depth 1
        let k0 = model
            .rate_samples
            .iter()
            .filter(|s| s.rate.is_finite())
            .map(|s| s.rate / (s.eps * s.eps))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(model.k, k0 / 6.0, max_relative = 1e-12);
    }
}
