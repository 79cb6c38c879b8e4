//! Config-driven Monte Carlo estimation of the shadowing probability.
//!
//! One trial samples a starting point from the product measure, runs the
//! Markov-chain generator, and verdicts the trajectory with the
//! constructive pipeline. Success therefore always carries a concrete
//! witness orbit re-verified by direct distance checks, so the estimated
//! probability is a certified lower bound.
//!
//! Reproducibility: every trial derives four private ChaCha streams from
//! `(master_seed, trial index)` — start sampling, symbolic ball noise,
//! fiber noise, splice fill — so results are a pure function of the
//! configuration and never depend on the worker count or scheduling.

pub mod cli;
pub mod config;
pub mod verify;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cocycle::{LambdaTable, SkewState};
use crate::error::{Error, Result};
use crate::ldp::{build_rate_model, RateModel};
use crate::pseudo::{generate, generate_exact, sample_start, window_halfwidth};
use crate::shadow::shadow_attempt;
use crate::stats::{wilson_interval, z_for_confidence};
use crate::symbolic::sample_point;

pub use config::{ExperimentConfig, GammaSpec, OutputFormat, TableSpec};

/// Test hook: trials can run with the perturbation forced to zero, in
/// which case every trajectory is an exact orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Random,
    Zero,
}

/// Per-trial outcome and proof-event diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct TrialRecord {
    pub seed_index: u64,
    pub verdict: bool,
    /// Minimax value in d-units.
    pub minimax: f64,
    pub max_fiber_gap: f64,
    pub max_symbolic_gap: f64,
    /// Tracking event: minimax within the scaling threshold.
    pub s1: bool,
    /// Witness-divergence event: homogeneous and exact orbits through
    /// the center drift apart beyond the threshold.
    pub s2: bool,
    /// Soundness check: whenever the two events suffice for shadowing
    /// (`2 d tau <= epsilon`), the verdict must be true. Always true in
    /// a correct build.
    pub event_consistent: bool,
}

/// Aggregated estimate for one `(N, d, epsilon)` cell.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub n: usize,
    pub d: f64,
    pub epsilon: f64,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub s1_rate: f64,
    pub s2_rate: f64,
    pub event_violations: u64,
    pub mean_minimax: f64,
    pub mean_fiber_gap: f64,
    pub mean_symbolic_gap: f64,
    pub seconds: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    table: &LambdaTable,
    n: usize,
    d: f64,
    epsilon: f64,
    tau: f64,
    master_seed: u64,
    idx: u64,
    noise: Noise,
) -> Result<TrialRecord> {
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(master_seed);
        r.set_stream(idx * 4 + k);
        r
    };
    let mut init = stream(0);
    let mut ball = stream(1);
    let mut fiber = stream(2);
    let mut splice = stream(3);
    let traj = match noise {
        Noise::Random => {
            let q0 = sample_start(table, d, &mut init)?;
            generate(table, q0, d, n, idx, &mut ball, &mut fiber)?
        }
        Noise::Zero => {
            let w_half = window_halfwidth(table.depth(), d)?;
            let w0 = sample_point(-w_half, w_half + n as i64 - 1, &mut init)?;
            generate_exact(table, SkewState::new(w0, 0.0), d, n, idx)?
        }
    };
    let sol = shadow_attempt(table, &traj, epsilon, &mut splice)?;
    let s1 = sol.minimax <= tau;
    let s2 = sol.homog_exact_gap > d * tau;
    let event_consistent = if s1 && !s2 && 2.0 * d * tau <= epsilon {
        sol.verdict
    } else {
        true
    };
    Ok(TrialRecord {
        seed_index: idx,
        verdict: sol.verdict,
        minimax: sol.minimax,
        max_fiber_gap: sol.max_fiber_gap,
        max_symbolic_gap: sol.max_symbolic_gap,
        s1,
        s2,
        event_consistent,
    })
}

/// Options for [`estimate_p_with`]; [`estimate_p`] uses the defaults.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub workers: usize,
    pub noise: Noise,
    /// Scaling threshold in d-units for the proof-event bookkeeping;
    /// defaults to `epsilon / d`.
    pub event_threshold: Option<f64>,
    /// Record wall time in the outcome (off by default so outputs are
    /// bit-reproducible).
    pub timing: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            workers: 0,
            noise: Noise::Random,
            event_threshold: None,
            timing: false,
        }
    }
}

/// Estimates the probability that a random length-`n` d-pseudotrajectory
/// started at fiber zero is shadowable within `epsilon`: runs `trials`
/// independent certified attempts and aggregates.
pub fn estimate_p(
    table: &LambdaTable,
    d: f64,
    n: usize,
    epsilon: f64,
    trials: u64,
    master_seed: u64,
) -> Result<EstimateOutcome> {
    estimate_p_with(
        table,
        d,
        n,
        epsilon,
        trials,
        master_seed,
        EstimateOptions::default(),
    )
}

/// Full-options variant of [`estimate_p`].
pub fn estimate_p_with(
    table: &LambdaTable,
    d: f64,
    n: usize,
    epsilon: f64,
    trials: u64,
    master_seed: u64,
    opts: EstimateOptions,
) -> Result<EstimateOutcome> {
    if trials < 100 {
        return Err(Error::InvalidParameters(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidParameters("n must be at least 1".into()));
    }
    let tau = opts.event_threshold.unwrap_or(epsilon / d);
    let started = std::time::Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|idx| run_trial(table, n, d, epsilon, tau, master_seed, idx, opts.noise))
            .collect::<Result<Vec<_>>>()
    })?;
    // Aggregate sequentially in trial order: float sums must not depend
    // on the worker count.
    let mut successes = 0u64;
    let mut s1 = 0u64;
    let mut s2 = 0u64;
    let mut violations = 0u64;
    let mut sum_f = 0.0f64;
    let mut sum_fiber = 0.0f64;
    let mut sum_sym = 0.0f64;
    for r in &records {
        successes += u64::from(r.verdict);
        s1 += u64::from(r.s1);
        s2 += u64::from(r.s2);
        violations += u64::from(!r.event_consistent);
        sum_f += r.minimax;
        sum_fiber += r.max_fiber_gap;
        sum_sym += r.max_symbolic_gap;
    }
    let m = trials as f64;
    let (wilson_lo, wilson_hi) = wilson_interval(successes, trials, z_for_confidence(0.95));
    Ok(EstimateOutcome {
        n,
        d,
        epsilon,
        trials,
        successes,
        p_hat: successes as f64 / m,
        wilson_lo,
        wilson_hi,
        s1_rate: s1 as f64 / m,
        s2_rate: s2 as f64 / m,
        event_violations: violations,
        mean_minimax: sum_f / m,
        mean_fiber_gap: sum_fiber / m,
        mean_symbolic_gap: sum_sym / m,
        seconds: if opts.timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// A full scaling sweep: the resolved exponent, the rate model behind it
/// (when fitted), and one estimate per grid length.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub gamma: f64,
    pub rate_model: Option<RateModel>,
    pub rows: Vec<EstimateOutcome>,
}

/// Resolves the sweep exponent: explicit values pass through, "auto"
/// fits (or loads) a rate model and applies the safety margin to its
/// threshold.
pub fn resolve_gamma(
    cfg: &ExperimentConfig,
    table: &LambdaTable,
    loaded_model: Option<RateModel>,
) -> Result<(f64, Option<RateModel>)> {
    match cfg.gamma {
        GammaSpec::Fixed(g) => Ok((g, None)),
        GammaSpec::Auto(_) => {
            let model = match loaded_model {
                Some(m) => m,
                None => build_rate_model(
                    table,
                    cfg.rate.eps_max,
                    cfg.rate.grid_points,
                    cfg.rate.j_min,
                    cfg.rate.tilde_depth,
                )?,
            };
            let gamma = model.gamma_min * cfg.margin;
            Ok((gamma, Some(model)))
        }
    }
}

/// Runs `estimate_p` for every grid length at `d = epsilon / N^gamma`.
/// `on_row` fires after each completed row so partial results can be
/// flushed.
pub fn run_sweep<F: FnMut(&SweepResult) -> Result<()>>(
    cfg: &ExperimentConfig,
    table: &LambdaTable,
    gamma: f64,
    rate_model: Option<RateModel>,
    workers: usize,
    timing: bool,
    mut on_row: F,
) -> Result<SweepResult> {
    cfg.validate()?;
    cfg.validate_grid_against(table, gamma)?;
    let mut result = SweepResult {
        gamma,
        rate_model,
        rows: Vec::with_capacity(cfg.n_grid.len()),
    };
    for &n in &cfg.n_grid {
        let d = cfg.epsilon / (n as f64).powf(gamma);
        let row = estimate_p_with(
            table,
            d,
            n,
            cfg.epsilon,
            cfg.trials,
            cfg.master_seed,
            EstimateOptions {
                workers,
                noise: Noise::Random,
                event_threshold: None,
                timing,
            },
        )?;
        result.rows.push(row);
        on_row(&result)?;
    }
    Ok(result)
}

/// CSV header shared by `simulate` and `sweep` outputs.
pub const CSV_HEADER: &str = "N,d,epsilon,gamma,trials,successes,p_hat,wilson_lo,wilson_hi,\
                              s1_rate,s2_rate,mean_F,mean_fiber_gap,mean_symbolic_gap,seconds";

/// Renders rows in the fixed CSV schema.
pub fn to_csv(rows: &[EstimateOutcome], gamma: f64) -> String {
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.d,
            r.epsilon,
            gamma,
            r.trials,
            r.successes,
            r.p_hat,
            r.wilson_lo,
            r.wilson_hi,
            r.s1_rate,
            r.s2_rate,
            r.mean_minimax,
            r.mean_fiber_gap,
            r.mean_symbolic_gap,
            r.seconds
        ));
    }
    out
}

/// JSON mirror of the CSV rows plus the rate model used.
pub fn to_json(result: &SweepResult) -> String {
    use serde_json::{json, Value};
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|r| {
            json!({
                "N": r.n,
                "d": r.d,
                "epsilon": r.epsilon,
                "gamma": result.gamma,
                "trials": r.trials,
                "successes": r.successes,
                "p_hat": r.p_hat,
                "wilson_lo": r.wilson_lo,
                "wilson_hi": r.wilson_hi,
                "s1_rate": r.s1_rate,
                "s2_rate": r.s2_rate,
                "mean_F": r.mean_minimax,
                "mean_fiber_gap": r.mean_fiber_gap,
                "mean_symbolic_gap": r.mean_symbolic_gap,
                "seconds": r.seconds,
            })
        })
        .collect();
    let model = match &result.rate_model {
        Some(m) => serde_json::to_value(m).expect("rate model serializes"),
        None => Value::Null,
    };
    serde_json::to_string_pretty(&json!({
        "gamma": result.gamma,
        "rate_model": model,
        "rows": rows,
    }))
    .expect("sweep result serializes")
        + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(gamma: GammaSpec) -> ExperimentConfig {
        ExperimentConfig {
            table: TableSpec::Inline {
                depth: 0,
                values: vec![2.0, 1.0 / 3.0],
            },
            epsilon: 0.1,
            gamma,
            margin: 1.1,
            n_grid: vec![50],
            trials: 200,
            master_seed: 42,
            workers: 0,
            out: None,
            format: OutputFormat::Csv,
            rate_model: None,
            rate: Default::default(),
            step_budget: 1 << 33,
        }
    }

    #[test]
    fn zero_noise_trials_always_succeed() {
        let table = LambdaTable::contracting_example();
        let out = estimate_p_with(
            &table,
            1e-3,
            100,
            0.05,
            200,
            7,
            EstimateOptions {
                noise: Noise::Zero,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.p_hat, 1.0);
        assert_eq!(out.successes, 200);
        assert_eq!(out.event_violations, 0);
    }

    #[test]
    fn scale_mismatch_never_succeeds() {
        // epsilon = d/2: fiber noise alone almost surely exceeds epsilon
        let table = LambdaTable::contracting_example();
        let d = 0.01;
        let out = estimate_p(&table, d, 100, d / 2.0, 1000, 11).unwrap();
        assert_eq!(out.p_hat, 0.0, "p_hat = {}", out.p_hat);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let table = LambdaTable::contracting_example();
        let mut outs = Vec::new();
        for workers in [1usize, 2, 4] {
            let o = estimate_p_with(
                &table,
                1e-4,
                100,
                0.1,
                300,
                99,
                EstimateOptions {
                    workers,
                    ..Default::default()
                },
            )
            .unwrap();
            outs.push(to_csv(&[o], 3.0));
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[1], outs[2]);
    }

    #[test]
    fn event_bookkeeping_is_sound_under_proof_threshold() {
        // force the threshold to epsilon / (2 d): then the two proof
        // events suffice for shadowing and the consistency check is
        // armed on every trial
        let table = LambdaTable::contracting_example();
        let d = 1e-4;
        let eps = 0.1;
        let out = estimate_p_with(
            &table,
            d,
            100,
            eps,
            2000,
            123,
            EstimateOptions {
                event_threshold: Some(eps / (2.0 * d)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.event_violations, 0);
        assert!(out.s1_rate > 0.5);
        assert_eq!(out.s2_rate, 0.0, "below resolution the orbits agree");
    }

    #[test]
    fn wilson_interval_narrows_with_trials() {
        let table = LambdaTable::contracting_example();
        let mut widths = Vec::new();
        for trials in [100u64, 1000, 10_000] {
            let o = estimate_p(&table, 1e-4, 50, 0.1, trials, 5).unwrap();
            widths.push(o.wilson_hi - o.wilson_lo);
        }
        assert!(widths[0] > widths[1] && widths[1] > widths[2]);
        // roughly 1/sqrt(M)
        assert!(widths[0] / widths[2] > 5.0);
    }

    #[test]
    fn sweep_single_n_equals_estimate() {
        let table = LambdaTable::contracting_example();
        let cfg = base_config(GammaSpec::Fixed(3.0));
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        assert_eq!(gamma, 3.0);
        assert!(model.is_none());
        let sweep = run_sweep(&cfg, &table, gamma, model, 0, false, |_| Ok(())).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        let d = cfg.epsilon / (50f64).powf(3.0);
        let direct = estimate_p(&table, d, 50, cfg.epsilon, cfg.trials, cfg.master_seed).unwrap();
        assert_eq!(sweep.rows[0].successes, direct.successes);
        assert_eq!(to_csv(&sweep.rows, gamma), to_csv(&[direct], gamma));
    }

    #[test]
    fn deterministic_table_sweeps_at_unit_threshold() {
        // constant multiplier: the rate model degenerates, gamma drops to
        // the margin, and every trajectory is shadowable
        let table = LambdaTable::constant(0, 0.5).unwrap();
        let mut cfg = base_config(GammaSpec::Auto(config::AutoTag::Auto));
        cfg.n_grid = vec![50, 100];
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        assert!((gamma - cfg.margin).abs() < 1e-12);
        let model = model.unwrap();
        assert!(model.k.is_infinite());
        let sweep = run_sweep(&cfg, &table, gamma, Some(model), 0, false, |_| Ok(())).unwrap();
        for row in &sweep.rows {
            assert_eq!(row.p_hat, 1.0);
        }
    }

    #[test]
    fn auto_gamma_exceeds_threshold() {
        let table = LambdaTable::contracting_example();
        let cfg = base_config(GammaSpec::Auto(config::AutoTag::Auto));
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        let model = model.unwrap();
        assert!(gamma > model.gamma_min);
        assert!(model.gamma_min > 1.0);
        // for the two-value table the threshold lands near 5
        assert!(
            (4.0..7.0).contains(&gamma),
            "auto gamma {gamma} outside the expected band"
        );
    }

    #[test]
    fn csv_layout_matches_schema() {
        let table = LambdaTable::contracting_example();
        let o = estimate_p(&table, 1e-3, 20, 0.1, 100, 3).unwrap();
        let csv = to_csv(&[o], 2.5);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 15);
        assert!(header.starts_with("N,d,epsilon,gamma,trials,successes,p_hat"));
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 15);
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "20");
        assert_eq!(fields[3], "2.5");
        assert_eq!(fields[14], "0"); // timing off by default
    }

    #[test]
    fn json_mirrors_rows_and_model() {
        let table = LambdaTable::contracting_example();
        let cfg = base_config(GammaSpec::Auto(config::AutoTag::Auto));
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        let sweep = run_sweep(&cfg, &table, gamma, model, 0, false, |_| Ok(())).unwrap();
        let json = to_json(&sweep);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 1);
        assert!(v["rate_model"]["k"].is_number());
        assert_eq!(v["gamma"].as_f64().unwrap(), gamma);
        assert_eq!(v["rows"][0]["N"].as_u64().unwrap(), 50);
    }
}
