use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgecache::dynamics::{self, write_trajectory_csv, EvolutionConfig};
use edgecache::experiments::{
    self, dominance_violations, evaluate_point, reduction_report, run_sweep, write_gamma_scan_csv,
    write_load_csv, write_metrics_csv, write_profile_csv, write_reduction_csv, ExperimentConfig,
    MetricsRow, PointResult, Scheme, SweepParameter, SweepSpec,
};
use edgecache::oracle::write_comparison_csv;
use edgecache::Result;

const EXIT_BAND_FAILURE: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

/// Equilibrium solver and experiment runner for crowdsourced D2D caching.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Oracle seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Oracle trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and compare with the baselines.
    Equilibrium {
        /// On nonconvergence, retry with the `gamma_scan` damping values.
        #[arg(long)]
        auto_gamma: bool,
    },
    /// Run parameter sweeps and write metrics and reduction reports.
    Sweep {
        /// Run only this sweep instead of the configured ones.
        #[arg(long, value_parser = parse_parameter, requires_all = ["start", "stop", "step"])]
        parameter: Option<SweepParameter>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Check closed-form hit and serving rates against Monte Carlo.
    Validate,
    /// Convergence study over damping factors.
    GammaScan {
        /// Damping values; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
}

fn parse_parameter(s: &str) -> std::result::Result<SweepParameter, String> {
    match s {
        "beta" => Ok(SweepParameter::Beta),
        "rho" => Ok(SweepParameter::Rho),
        "psi" => Ok(SweepParameter::Psi),
        "alpha" => Ok(SweepParameter::Alpha),
        _ => Err(format!(
            "unknown sweep parameter `{s}` (beta, rho, psi, alpha)"
        )),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn fmt_reduction(r: Option<(f64, Option<f64>)>) -> String {
    match r {
        Some((r, Some(v))) => format!("{:.1}% at {v}", 100.0 * r),
        Some((r, None)) => format!("{:.1}%", 100.0 * r),
        None => "n/a".to_string(),
    }
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        println!(
            "  {:<12} cost {:>10.6}  cellular {:>9.6}  gap {:.2e}",
            r.scheme.name(),
            r.total_transmission_cost,
            r.cellular_load,
            r.equilibrium_gap
        );
    }
}

fn equilibrium(config: &ExperimentConfig, out: &Path, quiet: bool, auto_gamma: bool) -> Result<u8> {
    let mut point: PointResult = evaluate_point(config, None)?;
    let mut damping = config.evolution.damping;
    if !point.equilibrium.converged && auto_gamma {
        for &g in &config.gamma_scan {
            let mut c = config.clone();
            c.evolution = EvolutionConfig {
                damping: g,
                ..config.evolution
            };
            let retry = evaluate_point(&c, None)?;
            if retry.equilibrium.converged {
                point = retry;
                damping = g;
                break;
            }
        }
    }
    write_metrics_csv(&point.rows, create(out, "metrics.csv")?)?;
    write_trajectory_csv(&point.equilibrium, create(out, "trajectory.csv")?)?;
    write_profile_csv(&point.equilibrium.profile, create(out, "profile.csv")?)?;
    let eq = &point.equilibrium;
    if !quiet {
        println!(
            "damping {damping}: {} after {} iterations (step {:.2e}, gap {:.2e})",
            if eq.converged {
                "converged"
            } else {
                "NOT converged"
            },
            eq.iterations,
            eq.final_step_norm(),
            eq.equilibrium_gap
        );
        print_rows(&point.rows);
    }
    Ok(if eq.converged { 0 } else { EXIT_NONCONVERGENCE })
}

fn sweep(config: &ExperimentConfig, sweeps: &[SweepSpec], out: &Path, quiet: bool) -> Result<u8> {
    let mut code = 0;
    for spec in sweeps {
        let rows = run_sweep(config, spec)?;
        let report = reduction_report(&rows)?;
        let name = spec.parameter.name();
        write_metrics_csv(&rows, create(out, &format!("sweep_{name}.csv"))?)?;
        write_reduction_csv(&report, create(out, &format!("reduction_{name}.csv"))?)?;

        let unconverged: Vec<f64> = rows
            .iter()
            .filter(|r| r.scheme == Scheme::Equilibrium && !r.converged)
            .filter_map(|r| r.value)
            .collect();
        if !unconverged.is_empty() {
            code = EXIT_NONCONVERGENCE;
        }
        if quiet {
            continue;
        }
        println!("{name} sweep over {} points", rows.len() / 3);
        for e in &report.extremes {
            println!(
                "  {} vs {}: min {}, max {}",
                e.metric.name(),
                e.baseline,
                fmt_reduction(e.min),
                fmt_reduction(e.max)
            );
        }
        for v in dominance_violations(&rows, 1e-9)? {
            println!(
                "  equilibrium worse than {} on {} at {name} = {} by {:.3e}",
                v.baseline,
                v.metric.name(),
                v.value.unwrap_or(f64::NAN),
                -v.margin
            );
        }
        if !unconverged.is_empty() {
            println!("  not converged at {unconverged:?}");
        }
    }
    Ok(code)
}

fn validate(config: &ExperimentConfig, out: &Path, quiet: bool) -> Result<u8> {
    let report = experiments::validate_oracle(config)?;
    write_comparison_csv(&report.rows, &report.outcome, create(out, "validate.csv")?)?;
    write_load_csv(&report, create(out, "validate_loads.csv")?)?;
    for r in report.failures() {
        eprintln!(
            "file {}: P closed {:.6} hat {:.6} (se {:.2e}); N closed {:.6} hat {:.6} (se {:.2e})",
            r.file_id,
            r.p_closed,
            r.p_hat.value,
            r.p_hat.standard_error,
            r.n_closed,
            r.n_hat.value,
            r.n_hat.standard_error
        );
    }
    if !quiet {
        println!(
            "{} trials, seed {}: {}",
            report.outcome.trial_count,
            report.outcome.seed,
            if report.all_in_band() {
                "all files within band"
            } else {
                "band violations"
            }
        );
        for l in &report.loads {
            println!(
                "  {:<9} closed {:.6}  empirical {:.6}",
                l.name, l.closed, l.empirical
            );
        }
        if let Some(e) = report.outcome.storage_exceedance {
            println!("  realized caches over capacity: {:.1}%", 100.0 * e);
        }
    }
    Ok(if !report.all_in_band() {
        EXIT_BAND_FAILURE
    } else if !report.equilibrium.converged {
        EXIT_NONCONVERGENCE
    } else {
        0
    })
}

fn gamma_scan(config: &ExperimentConfig, gammas: &[f64], out: &Path, quiet: bool) -> Result<u8> {
    let entries = dynamics::gamma_scan(
        &config.population(),
        &config.catalog.build()?,
        &config.mobility.build()?,
        &config.evolution,
        gammas,
    )?;
    write_gamma_scan_csv(&entries, create(out, "gamma_scan.csv")?)?;
    if !quiet {
        for e in &entries {
            println!(
                "  gamma {:<5} {:<13} {:>6} iterations  step {:.2e}  gap {:.2e}",
                e.damping,
                if e.converged {
                    "converged"
                } else {
                    "not converged"
                },
                e.iterations,
                e.final_step_norm,
                e.equilibrium_gap
            );
        }
    }
    Ok(if entries.iter().any(|e| e.converged) {
        0
    } else {
        EXIT_NONCONVERGENCE
    })
}

fn run(cli: Cli) -> Result<u8> {
    let mut config = match &cli.common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.oracle.seed = seed;
    }
    if let Some(trials) = cli.common.trials {
        config.oracle.trials = trials;
    }
    config.validate()?;
    let out = cli
        .common
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out)?;
    let quiet = cli.common.quiet;

    match cli.command {
        Command::Equilibrium { auto_gamma } => equilibrium(&config, &out, quiet, auto_gamma),
        Command::Sweep {
            parameter,
            start,
            stop,
            step,
        } => {
            let sweeps = match (parameter, start, stop, step) {
                (Some(parameter), Some(start), Some(stop), Some(step)) => vec![SweepSpec {
                    parameter,
                    start,
                    stop,
                    step,
                }],
                _ => config.sweeps.clone(),
            };
            sweep(&config, &sweeps, &out, quiet)
        }
        Command::Validate => validate(&config, &out, quiet),
        Command::GammaScan { gammas } => {
            let gammas = gammas.unwrap_or_else(|| config.gamma_scan.clone());
            gamma_scan(&config, &gammas, &out, quiet)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
