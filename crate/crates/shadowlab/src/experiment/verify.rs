//! Self-contained verification suites: oracle comparisons and
//! distribution tests over random instances.
//!
//! Each suite checks one pillar of the pipeline against an independent
//! route (brute-force minimax, extended-range literal arithmetic, exact
//! binomial tails, chi-square statistics) and reports a single
//! pass/fail outcome with a one-line detail. `Full` level runs the
//! acceptance-scale parameters; `Quick` runs a fast slice of the same
//! checks for the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cocycle::LambdaTable;
use crate::error::Result;
use crate::experiment::{estimate_p_with, to_csv, EstimateOptions};
use crate::ldp::{build_rate_model, deviation_profile_pseudo};
use crate::oracle;
use crate::pseudo::{generate, generate_symbolic, normalize_start, residuals, sample_start};
use crate::shadow::{
    chebyshev_center, instance_from_steps, minimax_radius, minimax_radius_exhaustive,
    shadow_attempt, splice_base_point, weighted_gap,
};
use crate::stats::{chi_square_critical, chi_square_fair_bits, chi_square_pair_counts};
use crate::symbolic::{agreement_radius, distance, sample_point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteOutcome {
    fn pass(name: &'static str, detail: String) -> Self {
        SuiteOutcome {
            name,
            passed: true,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        SuiteOutcome {
            name,
            passed: false,
            detail,
        }
    }
}

/// Weighted-center identity on random instances: the pairwise-bound
/// maximum equals the brute-force minimum of the tracking gap, the
/// envelope solver matches the exhaustive reference, and the center
/// achieves the minimax value.
pub fn minimax_identity(level: Level) -> SuiteOutcome {
    let (instances, j_cap) = match level {
        Level::Quick => (100usize, 60usize),
        Level::Full => (1000, 200),
    };
    let results: Vec<(f64, f64, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(0x517e * 31 + i as u64);
            let steps = 1 + r.random_range(0..j_cap);
            let lambdas: Vec<f64> = (0..steps).map(|_| r.random_range(-1.0..1.0)).collect();
            let rs: Vec<f64> = (0..steps).map(|_| r.random_range(-1.0..1.0)).collect();
            let (sums, x) = instance_from_steps(&lambdas, &rs);
            let (f_pair, _) = minimax_radius_exhaustive(&sums, &x).unwrap();
            let (f_fast, _) = minimax_radius(&sums, &x).unwrap();
            let (g_min, _) = oracle::min_gap_grid_golden(sums.as_slice(), &x);
            let y0 = chebyshev_center(&sums, &x).unwrap();
            let g_y0 = weighted_gap(&sums, &x, y0);
            // tolerances carry the instance magnitude: evaluating the
            // gap means subtracting values of size `scale` down to a
            // result of size F, so every route carries absolute noise
            // around scale * 1e-15; a plain 1e-8/1e-10 demand is below
            // the f64 floor once the fiber values reach 1e7
            let scale = x.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
            (
                (f_pair - g_min).abs() / scale,
                ((f_fast - f_pair).abs() - 1e-13 * scale).max(0.0) / f_pair.max(1e-300),
                (g_y0 - f_pair) / (1e-9 * (1.0 + f_pair)).max(1e-13 * scale),
            )
        })
        .collect();
    let max_identity = results.iter().map(|r| r.0).fold(0.0f64, f64::max);
    let max_fast_rel = results.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let worst_center = results
        .iter()
        .map(|r| r.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "{instances} instances (J <= {j_cap}): max scaled |F - min g| = {max_identity:.3e}, \
         max fast/exhaustive drift = {max_fast_rel:.3e}, center slack ratio = {worst_center:.3e}"
    );
    if max_identity <= 1e-8 && max_fast_rel <= 1e-10 && worst_center <= 1.0 {
        SuiteOutcome::pass("minimax-identity", detail)
    } else {
        SuiteOutcome::fail("minimax-identity", detail)
    }
}

/// Overflow safety: long mean-contracting instances where the naive
/// weight reciprocals overflow doubles; the production value must stay
/// finite and match the extended-range literal evaluation.
pub fn overflow_stability(level: Level) -> SuiteOutcome {
    let instances = match level {
        Level::Quick => 3usize,
        Level::Full => 20,
    };
    let steps = 10_000usize;
    let table = LambdaTable::contracting_example();
    let logs: Vec<f64> = table.log_values().to_vec();
    let worst: Vec<(bool, f64, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(0x0f10 + i as u64);
            let lambdas: Vec<f64> = (0..steps)
                .map(|_| logs[usize::from(r.random::<bool>())])
                .collect();
            let rs: Vec<f64> = (0..steps).map(|_| r.random_range(-1.0..1.0)).collect();
            let (sums, x) = instance_from_steps(&lambdas, &rs);
            let deep = sums.as_slice()[steps] < -700.0;
            let (f, _) = minimax_radius(&sums, &x).unwrap();
            let (f_ref, _) = oracle::literal_minimax_extended(&lambdas, &rs);
            (deep && f.is_finite(), f, f_ref)
        })
        .collect();
    let all_finite = worst.iter().all(|w| w.0);
    let max_rel = worst
        .iter()
        .map(|w| (w.1 - w.2).abs() / w.2.abs().max(1e-300))
        .fold(0.0f64, f64::max);
    let detail = format!(
        "{instances} instances of {steps} steps: max relative drift vs extended-range \
         reference = {max_rel:.3e}"
    );
    if all_finite && max_rel <= 1e-8 {
        SuiteOutcome::pass("overflow-stability", detail)
    } else {
        SuiteOutcome::fail("overflow-stability", detail)
    }
}

/// Splice closeness and distribution: shift orbits of spliced points
/// stay within twice the radius, spliced coordinates are uniform per
/// index and independent across adjacent indices (chi-square at
/// significance 1e-3).
pub fn splice_distribution(level: Level) -> SuiteOutcome {
    let trials = match level {
        Level::Quick => 20_000u64,
        Level::Full => 100_000,
    };
    let d = 0.1;
    let len = 50usize;
    let n = agreement_radius(d).unwrap() as i64;
    let w_half = n + 1;
    let lo = -w_half;
    let hi = n + len as i64 - 1;
    let width = (hi - lo + 1) as usize;
    let mut ones = vec![0u64; width];
    let mut pairs = vec![[0u64; 4]; width - 1];
    let mut closeness_ok = true;
    let mut worst_dist = 0.0f64;
    let mut r = ChaCha8Rng::seed_from_u64(0x59173);
    for _ in 0..trials {
        let w0 = sample_point(-w_half, w_half, &mut r).unwrap();
        let ws = generate_symbolic(w0, d, len, &mut r).unwrap();
        let s = splice_base_point(&ws, d, hi, &mut r).unwrap();
        for (j, w) in ws.iter().enumerate() {
            let dist = distance(w, &s.shifted_by(j as i64)).unwrap().value();
            worst_dist = worst_dist.max(dist);
            if dist >= 2.0 * d {
                closeness_ok = false;
            }
        }
        let mut prev = 2u8;
        for (idx, j) in (lo..=hi).enumerate() {
            let bit = s.get(j).unwrap();
            ones[idx] += u64::from(bit);
            if idx > 0 {
                pairs[idx - 1][usize::from(prev * 2 + bit)] += 1;
            }
            prev = bit;
        }
    }
    let chi_bits = chi_square_fair_bits(&ones, trials);
    let chi_pairs = chi_square_pair_counts(&pairs, trials);
    let crit_bits = chi_square_critical(width as f64, 1e-3);
    let crit_pairs = chi_square_critical(3.0 * (width - 1) as f64, 1e-3);
    let detail = format!(
        "{trials} trajectories: worst orbit distance {worst_dist} (< {}), per-index chi2 \
         {chi_bits:.1} (crit {crit_bits:.1}), adjacent-pair chi2 {chi_pairs:.1} (crit {crit_pairs:.1})",
        2.0 * d
    );
    if closeness_ok && chi_bits < crit_bits && chi_pairs < crit_pairs {
        SuiteOutcome::pass("splice-distribution", detail)
    } else {
        SuiteOutcome::fail("splice-distribution", detail)
    }
}

/// Tail certification: fitted `(C, k)` dominate the exact binomial
/// deviation tails of the two-value table, and empirical
/// pseudotrajectory deviations respect the same bound within Wilson
/// 99% slack.
pub fn tail_certification(level: Level) -> SuiteOutcome {
    let trials = match level {
        Level::Quick => 20_000u64,
        Level::Full => 100_000,
    };
    let table = LambdaTable::contracting_example();
    let model = match build_rate_model(&table, None, 64, 10, None) {
        Ok(m) => m,
        Err(e) => return SuiteOutcome::fail("tail-certification", format!("model: {e}")),
    };
    let a = table.expected_log();
    let l0 = table.log_values()[0];
    let l1 = table.log_values()[1];
    let js = [10usize, 100, 1000];
    let epsilons: Vec<f64> = (1..=16).map(|i| (-a / 2.0) * i as f64 / 16.0).collect();
    let mut worst_margin = f64::INFINITY;
    for &j in &js {
        for &eps in &epsilons {
            let exact = oracle::binomial_two_value_tail(j, l0, l1, a, eps);
            let bound = model.tail_bound(eps, j);
            worst_margin = worst_margin.min(bound - exact);
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(0x7a11);
    let profile = match deviation_profile_pseudo(&table, 0.1, &js, &epsilons, trials, &mut r) {
        Ok(p) => p,
        Err(e) => return SuiteOutcome::fail("tail-certification", format!("profile: {e}")),
    };
    let mut worst_slack = f64::INFINITY;
    for (row, &j) in profile.iter().zip(&js) {
        for (est, &eps) in row.iter().zip(&epsilons) {
            let (lo99, _) = est.wilson(0.99);
            worst_slack = worst_slack.min(model.tail_bound(eps, j) - lo99);
        }
    }
    let detail = format!(
        "C = {:.3}, k = {:.4}: worst analytic margin {worst_margin:.3e}, worst empirical \
         slack {worst_slack:.3e} over {} cells at {trials} trials",
        model.c,
        model.k,
        js.len() * epsilons.len()
    );
    if worst_margin >= 0.0 && worst_slack >= 0.0 {
        SuiteOutcome::pass("tail-certification", detail)
    } else {
        SuiteOutcome::fail("tail-certification", detail)
    }
}

/// Start-point invariance: minimax value, verdict, and residuals agree
/// between a trajectory and its normalized version.
pub fn start_invariance(level: Level) -> SuiteOutcome {
    let trials = match level {
        Level::Quick => 200u64,
        Level::Full => 1000,
    };
    let table = LambdaTable::contracting_example();
    let d = 0.05;
    let len = 100usize;
    let eps = 0.1;
    let mut worst_res = 0.0f64;
    let mut agree = true;
    for seed in 0..trials {
        let mut sym = ChaCha8Rng::seed_from_u64(0xabc0 + seed);
        let mut fib = ChaCha8Rng::seed_from_u64(0xdef0 + seed);
        let mut q0 = sample_start(&table, d, &mut sym).unwrap();
        // nonzero fiber start, bounded away from zero
        q0.x = 0.25 + 0.75 * ((seed % 97) as f64 / 97.0);
        if seed % 2 == 1 {
            q0.x = -q0.x;
        }
        let traj = generate(&table, q0, d, len, seed, &mut sym, &mut fib).unwrap();
        let norm = normalize_start(&table, &traj).unwrap();
        let ra = residuals(&table, &traj).unwrap();
        let rb = residuals(&table, &norm).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            worst_res = worst_res.max((x - y).abs());
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(0x111 + seed);
        let mut r2 = r1.clone();
        let a = shadow_attempt(&table, &traj, eps, &mut r1).unwrap();
        let b = shadow_attempt(&table, &norm, eps, &mut r2).unwrap();
        if a.verdict != b.verdict || a.minimax != b.minimax {
            agree = false;
        }
    }
    let detail = format!(
        "{trials} trajectories with nonzero start: max residual drift {worst_res:.3e}, \
         verdict and minimax bit-identical: {agree}"
    );
    if worst_res < 1e-12 && agree {
        SuiteOutcome::pass("start-invariance", detail)
    } else {
        SuiteOutcome::fail("start-invariance", detail)
    }
}

/// Determinism: identical estimates from different worker counts.
pub fn determinism(level: Level) -> SuiteOutcome {
    let trials = match level {
        Level::Quick => 200u64,
        Level::Full => 1000,
    };
    let table = LambdaTable::contracting_example();
    let mut outputs = Vec::new();
    for workers in [1usize, 3] {
        match estimate_p_with(
            &table,
            1e-4,
            100,
            0.1,
            trials,
            2024,
            EstimateOptions {
                workers,
                ..Default::default()
            },
        ) {
            Ok(o) => outputs.push(to_csv(&[o], 2.0)),
            Err(e) => return SuiteOutcome::fail("determinism", format!("estimate: {e}")),
        }
    }
    let identical = outputs[0] == outputs[1];
    let detail = format!("{trials} trials at 1 vs 3 workers: byte-identical = {identical}");
    if identical {
        SuiteOutcome::pass("determinism", detail)
    } else {
        SuiteOutcome::fail("determinism", detail)
    }
}

/// Runs every suite at the given level.
pub fn run_all(level: Level) -> Vec<SuiteOutcome> {
    vec![
        minimax_identity(level),
        overflow_stability(level),
        splice_distribution(level),
        tail_certification(level),
        start_invariance(level),
        determinism(level),
    ]
}

/// Convenience for callers that need a hard error on failure.
pub fn assert_all(level: Level) -> Result<Vec<SuiteOutcome>> {
    let outcomes = run_all(level);
    for o in &outcomes {
        if !o.passed {
            return Err(crate::error::Error::InvalidParameters(format!(
                "verification suite {} failed: {}",
                o.name, o.detail
            )));
        }
    }
    Ok(outcomes)
}
