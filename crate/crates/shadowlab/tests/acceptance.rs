//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (run with `--nocapture` to see them).

// Negated comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use shadowlab::cocycle::LambdaTable;
use shadowlab::experiment::verify::{self, Level};
use shadowlab::experiment::{
    resolve_gamma, run_sweep, to_csv, ExperimentConfig, GammaSpec, OutputFormat, TableSpec,
};

fn report(k: usize, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {k} ({name}): {verdict} - {detail}");
    assert!(passed, "criterion {k} ({name}): {detail}");
}

fn timed<F: FnOnce() -> (bool, String)>(k: usize, name: &str, budget_secs: f64, f: F) {
    let start = std::time::Instant::now();
    let (passed, detail) = f();
    let secs = start.elapsed().as_secs_f64();
    report(
        k,
        name,
        passed && secs <= budget_secs,
        &format!("{detail} [{secs:.1}s, budget {budget_secs:.0}s]"),
    );
}

#[test]
fn criterion_1_minimax_identity() {
    timed(1, "minimax identity", 60.0, || {
        let o = verify::minimax_identity(Level::Full);
        (o.passed, o.detail)
    });
}

#[test]
fn criterion_2_overflow_safety() {
    timed(2, "overflow safety", 60.0, || {
        let o = verify::overflow_stability(Level::Full);
        (o.passed, o.detail)
    });
}

#[test]
fn criterion_3_splice_closeness_and_distribution() {
    timed(3, "splice closeness and distribution", 120.0, || {
        let o = verify::splice_distribution(Level::Full);
        (o.passed, o.detail)
    });
}

#[test]
fn criterion_4_tail_bound_certification() {
    timed(4, "tail bound certification", 180.0, || {
        let o = verify::tail_certification(Level::Full);
        (o.passed, o.detail)
    });
}

#[test]
fn criterion_5_start_invariance() {
    timed(5, "start invariance", 30.0, || {
        let o = verify::start_invariance(Level::Full);
        (o.passed, o.detail)
    });
}

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig {
        table: TableSpec::Inline {
            depth: 0,
            values: vec![2.0, 1.0 / 3.0],
        },
        epsilon: 0.1,
        gamma: GammaSpec::Auto(shadowlab::experiment::config::AutoTag::Auto),
        margin: 1.1,
        n_grid: vec![100, 316, 1000, 3162, 10_000],
        trials: 2000,
        master_seed: 20_260_810,
        workers: 0,
        out: None,
        format: OutputFormat::Csv,
        rate_model: None,
        rate: Default::default(),
        step_budget: 1 << 33,
    }
}

#[test]
fn criterion_6_scaling_limit() {
    timed(6, "scaling limit sweep", 900.0, || {
        let cfg = sweep_config();
        let table = LambdaTable::contracting_example();
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        let model = model.as_ref().unwrap().clone();
        let sweep = run_sweep(&cfg, &table, gamma, Some(model), 0, false, |_| Ok(())).unwrap();

        let mut ok = gamma > 1.0;
        let mut notes = vec![format!("gamma = {gamma:.4}")];

        // nondecreasing within joint 95% Wilson bands: any later upper
        // bound must reach at least every earlier lower bound
        for i in 0..sweep.rows.len() {
            for j in i + 1..sweep.rows.len() {
                if sweep.rows[j].wilson_hi < sweep.rows[i].wilson_lo {
                    ok = false;
                    notes.push(format!(
                        "significant decrease from N={} to N={}",
                        sweep.rows[i].n, sweep.rows[j].n
                    ));
                }
            }
        }
        let last = sweep.rows.last().unwrap();
        if !(last.p_hat >= 0.9) {
            ok = false;
            notes.push(format!("p_hat(N=10^4) = {} < 0.9", last.p_hat));
        }
        // frozen regression fixtures from the first certified run
        // (master seed 20260810): every grid point succeeded on all
        // 2000 trials, with enormous margin between the minimax values
        // and the threshold N^gamma
        for row in &sweep.rows {
            if !(row.p_hat >= 0.998) {
                ok = false;
                notes.push(format!(
                    "N={}: p_hat {} fell below the frozen fixture band",
                    row.n, row.p_hat
                ));
            }
            if row.event_violations != 0 {
                ok = false;
                notes.push(format!("N={}: event bookkeeping violated", row.n));
            }
            if !(row.s2_rate == 0.0) {
                ok = false;
                notes.push(format!("N={}: nonzero witness-divergence rate", row.n));
            }
        }
        notes.push(format!(
            "p_hat = [{}]",
            sweep
                .rows
                .iter()
                .map(|r| format!("{}", r.p_hat))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        (ok, notes.join("; "))
    });
}

#[test]
fn criterion_7_worker_count_determinism() {
    timed(7, "worker-count determinism", 900.0, || {
        let cfg = sweep_config();
        let table = LambdaTable::contracting_example();
        let (gamma, model) = resolve_gamma(&cfg, &table, None).unwrap();
        let mut outputs = Vec::new();
        for workers in [2usize, 5] {
            let sweep = run_sweep(&cfg, &table, gamma, model.clone(), workers, false, |_| {
                Ok(())
            })
            .unwrap();
            outputs.push(to_csv(&sweep.rows, gamma));
        }
        let identical = outputs[0] == outputs[1];
        (
            identical,
            format!(
                "CSV bytes identical across 2 vs 5 workers: {identical} ({} bytes)",
                outputs[0].len()
            ),
        )
    });
}
