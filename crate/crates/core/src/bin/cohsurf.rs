//! Command-line driver: sweeps, single points, the oracle suite, and the
//! post-processing estimators.
//!
//! Exit codes: 0 success, 2 config error, 3 oracle mismatch, 4 excessive
//! sample failures.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use cohsurf::experiment::{
    self, apply_config_key, config_from_text, estimate_crossing, estimate_threshold, fit_decay,
    oracle_cross_validation, read_summary_csv, run_sweep, ExperimentError, Mode, RunMode,
    SweepConfig,
};

#[derive(Parser)]
#[command(name = "cohsurf", version, about = "Surface-code thresholds under generic single-qubit coherent errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SweepArgs {
    /// Flat key=value config file; flags override file keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated rotation angles; plain radians or '0.07pi'.
    #[arg(long)]
    alphas: Option<String>,
    /// Axis polar angle (radians or 'Xpi').
    #[arg(long)]
    theta: Option<String>,
    /// Axis azimuth (radians or 'Xpi').
    #[arg(long)]
    phi: Option<String>,
    /// Comma-separated code distances (square layouts).
    #[arg(long)]
    distances: Option<String>,
    /// Samples per (alpha, d) point.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    chi_max: Option<usize>,
    #[arg(long)]
    svd_cutoff: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// coherent | twirl | mwpm | all
    #[arg(long)]
    mode: Option<String>,
    /// Output prefix for the records/summary CSV pair.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (alpha, d) point and emit its records.
    Sample(SweepArgs),
    /// Run a full (alpha, d) grid.
    Sweep(SweepArgs),
    /// Sweep in Pauli-twirl mode.
    Twirl(SweepArgs),
    /// Sweep reporting the MWPM logical error.
    Mwpm(SweepArgs),
    /// Cross-validate the circuit against the exact oracles.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        d2_cases: usize,
        #[arg(long, default_value_t = 20)]
        d3_cases: usize,
    },
    /// Fit the decay rate 1/ell of P_L against d from a summary CSV.
    Fit {
        #[arg(long)]
        summary: PathBuf,
        /// Alpha of the below-threshold column to fit (radians or 'Xpi').
        #[arg(long)]
        alpha: String,
        #[arg(long, default_value = "coherent")]
        mode: String,
    },
    /// Estimate the threshold from the sigma_S peak in a summary CSV.
    Threshold {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, default_value = "coherent")]
        mode: String,
    },
    /// Dump the layout table of an LxM code.
    Layout {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        m: usize,
    },
}

fn build_config(args: &SweepArgs, forced_mode: Option<Mode>) -> Result<SweepConfig, ExperimentError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
                path: path.clone(),
                source,
            })?;
            config_from_text(&text)?
        }
        None => SweepConfig {
            alphas: Vec::new(),
            theta: f64::NAN,
            phi: f64::NAN,
            distances: Vec::new(),
            samples: 100,
            chi_max: 64,
            svd_cutoff: 1e-10,
            seed: 1,
            mode: Mode::Coherent,
            out: PathBuf::from("cohsurf_run"),
            workers: None,
        },
    };
    if let Some(v) = &args.alphas {
        apply_config_key(&mut cfg, "alphas", v)?;
    }
    if let Some(v) = &args.theta {
        apply_config_key(&mut cfg, "theta", v)?;
    }
    if let Some(v) = &args.phi {
        apply_config_key(&mut cfg, "phi", v)?;
    }
    if let Some(v) = &args.distances {
        apply_config_key(&mut cfg, "distances", v)?;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.chi_max {
        cfg.chi_max = v;
    }
    if let Some(v) = args.svd_cutoff {
        cfg.svd_cutoff = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.mode {
        cfg.mode = Mode::parse(v)?;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.workers {
        cfg.workers = Some(v);
    }
    if let Some(mode) = forced_mode {
        cfg.mode = mode;
    }
    if cfg.alphas.is_empty() || cfg.distances.is_empty() || cfg.theta.is_nan() || cfg.phi.is_nan()
    {
        return Err(ExperimentError::Config(
            "alphas, theta, phi and distances must be given (flags or config file)".into(),
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_sweep_command(args: &SweepArgs, forced: Option<Mode>, single_point: bool) -> ExitCode {
    let cfg = match build_config(args, forced) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if single_point && (cfg.alphas.len() != 1 || cfg.distances.len() != 1) {
        eprintln!("error: 'sample' runs exactly one (alpha, d) point");
        return ExitCode::from(2);
    }
    match run_sweep(&cfg) {
        Ok(out) => {
            let records_path = cfg.out.with_extension("records.csv");
            let summary_path = cfg.out.with_extension("summary.csv");
            if let Err(e) = experiment::write_records_csv(&records_path, &cfg, &out.records) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if let Err(e) = experiment::write_summary_csv(&summary_path, &cfg, &out.summaries) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            for s in &out.summaries {
                println!(
                    "alpha/pi={:.5} d={} mode={}: P_L = {:.6} ± {:.6}  S = {:.4} (σ_S {:.4})  n={} fail={}",
                    s.alpha / std::f64::consts::PI,
                    s.d,
                    s.mode.label(),
                    s.pl_mean,
                    s.pl_se,
                    s.s_mean,
                    s.s_sigma,
                    s.n,
                    s.fail_count
                );
            }
            println!("records: {}", records_path.display());
            println!("summary: {}", summary_path.display());
            ExitCode::SUCCESS
        }
        Err(e @ ExperimentError::ExcessiveFailures { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_mode_or_exit(s: &str) -> Result<RunMode, ExitCode> {
    match s {
        "coherent" => Ok(RunMode::Coherent),
        "twirl" => Ok(RunMode::Twirl),
        "mwpm" => Ok(RunMode::Mwpm),
        other => {
            eprintln!("error: unknown mode '{other}'");
            Err(ExitCode::from(2))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Sample(args) => run_sweep_command(&args, None, true),
        Command::Sweep(args) => run_sweep_command(&args, None, false),
        Command::Twirl(args) => run_sweep_command(&args, Some(Mode::Twirl), false),
        Command::Mwpm(args) => run_sweep_command(&args, Some(Mode::Mwpm), false),
        Command::Oracle {
            seed,
            d2_cases,
            d3_cases,
        } => {
            let report = oracle_cross_validation(seed, d2_cases, d3_cases);
            println!(
                "oracle cross-validation: {} checks, {} failures",
                report.checks,
                report.failures.len()
            );
            for f in &report.failures {
                println!("MISMATCH: {f}");
            }
            if report.passed() {
                println!("PASS");
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Command::Fit {
            summary,
            alpha,
            mode,
        } => {
            let mode = match parse_mode_or_exit(&mode) {
                Ok(m) => m,
                Err(c) => return c,
            };
            let alpha = match experiment::parse_angle(&alpha) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let rows = match read_summary_csv(&summary) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let pts: Vec<(usize, f64)> = rows
                .iter()
                .filter(|r| r.mode == mode && (r.alpha - alpha).abs() < 1e-9)
                .map(|r| (r.d, r.pl_mean))
                .collect();
            match fit_decay(&pts) {
                Ok(fit) => {
                    if fit.excluded > 0 {
                        eprintln!("warning: excluded {} non-positive P_L points", fit.excluded);
                    }
                    println!(
                        "decay rate 1/ell = {:.6} ± {:.6} ({} points)",
                        fit.rate,
                        fit.rate_se,
                        pts.len() - fit.excluded
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Threshold { summary, mode } => {
            let mode = match parse_mode_or_exit(&mode) {
                Ok(m) => m,
                Err(c) => return c,
            };
            let rows = match read_summary_csv(&summary) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match estimate_threshold(&rows, mode) {
                Ok(est) => {
                    println!(
                        "alpha_th = {:.6} rad = {:.4} pi ± {:.4} pi (sigma_S peak at d = {})",
                        est.alpha_th,
                        est.alpha_th / std::f64::consts::PI,
                        est.uncertainty / std::f64::consts::PI,
                        est.largest_d
                    );
                    for (d, p) in &est.per_d_peaks {
                        println!("  d={d}: peak at {:.4} pi", p / std::f64::consts::PI);
                    }
                    if let Ok(x) = estimate_crossing(&rows, mode) {
                        println!(
                            "  P_L crossing of two largest d: {:.4} pi",
                            x / std::f64::consts::PI
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Layout { l, m } => match cohsurf::lattice::build_layout(l, m) {
            Ok(layout) => {
                print!("{}", layout.dump());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
