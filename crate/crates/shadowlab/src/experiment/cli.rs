//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on configuration or validation errors,
//! 2 on runtime failures (including failed verification suites).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::experiment::config::{ExperimentConfig, OutputFormat};
use crate::experiment::verify::{self, Level};
use crate::experiment::{
    estimate_p_with, resolve_gamma, run_sweep, to_csv, to_json, EstimateOptions, Noise, SweepResult,
};
use crate::ldp::RateModel;

#[derive(Debug, Parser)]
#[command(
    name = "shadowlab",
    version,
    about = "Monte Carlo shadowing experiments for linear skew products over the fair-coin shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores); the SHADOWLAB_WORKERS environment
    /// variable overrides this flag.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output path (defaults to the configured one, else stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Record wall time in the output rows (off keeps outputs
    /// bit-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One probability estimate at a single trajectory length.
    Simulate {
        /// Trajectory length (defaults to the first grid entry).
        #[arg(long)]
        n: Option<usize>,
        /// Perturbation radius (defaults to epsilon / N^gamma).
        #[arg(long)]
        d: Option<f64>,
    },
    /// The full scaling sweep over the configured length grid.
    Sweep,
    /// Fit the deviation-rate model and write it as JSON.
    Rate,
    /// Run the property/oracle suites and print one line per suite.
    Verify {
        /// Acceptance-scale parameters instead of the quick slice.
        #[arg(long)]
        full: bool,
    },
    /// Splice closeness and distribution tests only.
    SpliceTest {
        /// Acceptance-scale trial count.
        #[arg(long)]
        full: bool,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidParameters(_)
        | Error::InvalidTable(_)
        | Error::InvalidModel(_)
        | Error::InvalidWindow { .. }
        | Error::InvalidRadius { .. }
        | Error::InvalidPerturbation { .. }
        | Error::ResourceLimit { .. } => 1,
        _ => 2,
    }
}

fn effective_workers(cli: &Cli, cfg: Option<&ExperimentConfig>) -> usize {
    if let Ok(v) = std::env::var("SHADOWLAB_WORKERS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n;
        }
    }
    cli.workers.or(cfg.map(|c| c.workers)).unwrap_or(0)
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs --config".into()))?;
    let (mut cfg, base) = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(fmt) = cli.format {
        cfg.format = match fmt {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok((cfg, base))
}

/// The table with mean log contraction enforced: tables with expanding
/// mean are replaced by their reciprocal (the two directions have the
/// same shadowing behavior); a zero mean is rejected.
fn contracting_table(
    cfg: &ExperimentConfig,
    base: &Path,
) -> Result<(crate::cocycle::LambdaTable, bool), Error> {
    let table = cfg.table.load(base)?;
    let a = table.expected_log();
    if a == 0.0 {
        return Err(Error::Config(
            "table has zero mean log multiplier; the deviation analysis needs a nonzero mean"
                .into(),
        ));
    }
    if a > 0.0 {
        return Ok((table.inverted(), true));
    }
    Ok((table, false))
}

fn rate_model_path(cfg: &ExperimentConfig, cli_out: Option<&PathBuf>, base: &Path) -> PathBuf {
    let raw = cli_out
        .cloned()
        .or_else(|| cfg.rate_model.clone())
        .unwrap_or_else(|| PathBuf::from("rate_model.json"));
    if raw.is_absolute() {
        raw
    } else {
        base.join(raw)
    }
}

fn maybe_load_rate_model(cfg: &ExperimentConfig, base: &Path) -> Result<Option<RateModel>, Error> {
    let Some(rel) = &cfg.rate_model else {
        return Ok(None);
    };
    let path = if rel.is_absolute() {
        rel.clone()
    } else {
        base.join(rel)
    };
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let model: RateModel = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("rate model {}: {e}", path.display())))?;
    Ok(Some(model))
}

fn emit(cfg: &ExperimentConfig, rendered: &str) -> Result<(), Error> {
    match &cfg.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn render(cfg: &ExperimentConfig, result: &SweepResult) -> String {
    match cfg.format {
        OutputFormat::Csv => to_csv(&result.rows, result.gamma),
        OutputFormat::Json => to_json(result),
    }
}

fn run(cli: &Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Simulate { n, d } => {
            let (cfg, base) = load_config(cli)?;
            let workers = effective_workers(cli, Some(&cfg));
            let (table, inverted) = contracting_table(&cfg, &base)?;
            if inverted {
                eprintln!("note: table mean is expanding; using the reciprocal table");
            }
            let loaded = maybe_load_rate_model(&cfg, &base)?;
            let (gamma, model) = resolve_gamma(&cfg, &table, loaded)?;
            let n = n.unwrap_or(cfg.n_grid[0]);
            let d = d.unwrap_or(cfg.epsilon / (n as f64).powf(gamma));
            let row = estimate_p_with(
                &table,
                d,
                n,
                cfg.epsilon,
                cfg.trials,
                cfg.master_seed,
                EstimateOptions {
                    workers,
                    noise: Noise::Random,
                    event_threshold: None,
                    timing: cli.timing,
                },
            )?;
            let result = SweepResult {
                gamma,
                rate_model: model,
                rows: vec![row],
            };
            emit(&cfg, &render(&cfg, &result))?;
            Ok(0)
        }
        Command::Sweep => {
            let (cfg, base) = load_config(cli)?;
            let workers = effective_workers(cli, Some(&cfg));
            let (table, inverted) = contracting_table(&cfg, &base)?;
            if inverted {
                eprintln!("note: table mean is expanding; using the reciprocal table");
            }
            let loaded = maybe_load_rate_model(&cfg, &base)?;
            let (gamma, model) = resolve_gamma(&cfg, &table, loaded)?;
            let result = run_sweep(&cfg, &table, gamma, model, workers, cli.timing, |partial| {
                // flush partial rows after every grid point
                if cfg.out.is_some() {
                    emit(&cfg, &render(&cfg, partial))?;
                }
                Ok(())
            })?;
            emit(&cfg, &render(&cfg, &result))?;
            Ok(0)
        }
        Command::Rate => {
            let (cfg, base) = load_config(cli)?;
            let (table, inverted) = contracting_table(&cfg, &base)?;
            if inverted {
                eprintln!("note: table mean is expanding; using the reciprocal table");
            }
            let model = crate::ldp::build_rate_model(
                &table,
                cfg.rate.eps_max,
                cfg.rate.grid_points,
                cfg.rate.j_min,
                cfg.rate.tilde_depth,
            )?;
            let path = rate_model_path(&cfg, cli.out.as_ref(), &base);
            std::fs::write(&path, serde_json::to_string_pretty(&model).unwrap() + "\n")?;
            println!(
                "rate model: a = {}, k = {}, C = {}, gamma_min = {} -> {}",
                model.a,
                model.k,
                model.c,
                model.gamma_min,
                path.display()
            );
            Ok(0)
        }
        Command::Verify { full } => {
            let level = if *full { Level::Full } else { Level::Quick };
            let outcomes = verify::run_all(level);
            let mut ok = true;
            for o in &outcomes {
                println!(
                    "{}: {} ({})",
                    o.name,
                    if o.passed { "PASS" } else { "FAIL" },
                    o.detail
                );
                ok &= o.passed;
            }
            Ok(if ok { 0 } else { 2 })
        }
        Command::SpliceTest { full } => {
            let level = if *full { Level::Full } else { Level::Quick };
            let o = verify::splice_distribution(level);
            println!(
                "{}: {} ({})",
                o.name,
                if o.passed { "PASS" } else { "FAIL" },
                o.detail
            );
            Ok(if o.passed { 0 } else { 2 })
        }
    }
}

/// Parses the argument list and runs the selected subcommand, returning
/// the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
