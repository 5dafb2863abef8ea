use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use betacount::{
    merge_reports, run_clt, run_equilibrium, run_sample, run_variance_scan, run_verify_identities,
    ExperimentConfig, ExperimentReport,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "betacount", version, about = "Eigenvalue counting statistics for beta-ensembles")]
struct Cli {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV tables and summary.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "BETACOUNT_THREADS")]
    threads: Option<usize>,
    /// Also write D_n, M_n, T_n, F, the recurrence and the kernel as CSV
    /// (verify-identities).
    #[arg(long, global = true)]
    dump_matrices: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Support, density and effective potential.
    Equilibrium,
    /// Variance trace against log n.
    VarianceScan,
    /// Determinant and Monte Carlo characteristic functionals.
    Clt,
    /// Exact finite-n identities, n <= 64.
    VerifyIdentities,
    /// Draw ensemble samples and counts.
    Sample,
    /// Combine summary.json files into merged.json.
    ReportMerge {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.sampler.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    config.dump_matrices |= cli.dump_matrices;
    Ok(config)
}

fn print_report(report: &ExperimentReport) {
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {} value={:e} tolerance={:e} {}", c.name, c.value, c.tolerance, c.detail);
    }
    println!(
        "{}: {}",
        report.experiment,
        if report.passed { "all checks passed" } else { "some checks failed" }
    );
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::ReportMerge { reports } = &cli.command {
        let parsed = reports
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        let merged = merge_reports(parsed);
        let json = serde_json::to_string_pretty(&merged)?;
        match &cli.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("merged.json"), json + "\n")?;
            }
            None => println!("{json}"),
        }
        for name in &merged.failed_checks {
            println!("FAIL {name}");
        }
        return Ok(merged.passed);
    }

    let config = load_config(&cli)?;
    let report = match cli.command {
        Command::Equilibrium => run_equilibrium(&config),
        Command::VarianceScan => run_variance_scan(&config),
        Command::Clt => run_clt(&config),
        Command::VerifyIdentities => run_verify_identities(&config),
        Command::Sample => run_sample(&config),
        Command::ReportMerge { .. } => unreachable!(),
    }?;
    if let Some(dir) = &config.output_dir {
        report.write_summary(dir)?;
    }
    print_report(&report);
    Ok(report.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
