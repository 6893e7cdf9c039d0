//! Command line front end: runs single cells or whole sweeps from a config
//! file and averages finished sweeps over seeds.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use airlangevin::runner::{
    parse_config, run_grid, summarize_dir, ExperimentConfig, RunRecord, RESULTS_FILE,
    SUMMARY_FILE,
};

#[derive(Parser)]
#[command(name = "airlangevin", version, about = "Decentralized Langevin sampling over noisy channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the single grid cell a config describes and print its metrics
    Run(SweepArgs),
    /// Run every cell of the grid a config describes
    Sweep(SweepArgs),
    /// Average a finished sweep over seeds into summary.csv
    Summarize {
        /// Directory holding a results.csv
        dir: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config file
    config: PathBuf,
    /// Replace the config's seed list with this single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write results here instead of the config's output dir
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to one per core
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(failed_cells) => ExitCode::from(failed_cells.min(255) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> anyhow::Result<usize> {
    match Cli::parse().command {
        Command::Run(args) => {
            let (cfg, out_dir) = load(&args)?;
            if cfg.cell_count() != 1 {
                bail!(
                    "config describes {} cells; `run` expects exactly one (narrow the grid or use `sweep`)",
                    cfg.cell_count()
                );
            }
            let records = run_grid(&cfg, &out_dir)?;
            let record = &records[0];
            print_record(record);
            println!("wrote {}", out_dir.join(RESULTS_FILE).display());
            Ok(record.error.iter().count())
        }
        Command::Sweep(args) => {
            let (cfg, out_dir) = load(&args)?;
            let records = run_grid(&cfg, &out_dir)?;
            for record in &records {
                print_record(record);
            }
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} cells -> {} ({} failed)",
                records.len(),
                out_dir.join(RESULTS_FILE).display(),
                failed
            );
            Ok(failed)
        }
        Command::Summarize { dir } => {
            let rows = summarize_dir(&dir)?;
            println!(
                "{:<10} {:<12} {:>6} {:>5} {:>17} {:>17} {:>17} {:>17}",
                "algorithm", "topology", "snr", "seeds", "accuracy", "ece", "mean_err", "cov_err"
            );
            for row in &rows {
                println!(
                    "{:<10} {:<12} {:>6} {:>5} {:>17} {:>17} {:>17} {:>17}",
                    row.algorithm,
                    row.topology,
                    row.snr_db.map_or_else(|| "-".to_string(), |s| s.to_string()),
                    row.seeds,
                    fmt_spread(row.accuracy_mean, row.accuracy_std),
                    fmt_spread(row.ece_mean, row.ece_std),
                    fmt_spread(row.mean_err_mean, row.mean_err_std),
                    fmt_spread(row.cov_err_mean, row.cov_err_std),
                );
            }
            println!("wrote {}", dir.join(SUMMARY_FILE).display());
            Ok(0)
        }
    }
}

fn load(args: &SweepArgs) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let mut cfg = parse_config(&text)
        .with_context(|| format!("cannot parse config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .context("no output directory: set `dir` under [output] or pass --out-dir")?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot size the worker pool")?;
    }
    Ok((cfg, out_dir))
}

fn print_record(record: &RunRecord) {
    let coords = format!(
        "{:<10} {:<12} {:>6} seed {}",
        record.algorithm,
        record.topology,
        record.snr_db.map_or_else(|| "-".to_string(), |s| s.to_string()),
        record.seed
    );
    match (&record.report, &record.error) {
        (Some(report), _) => {
            let mut metrics = Vec::new();
            if let Some(v) = report.accuracy {
                metrics.push(format!("acc {v:.4}"));
            }
            if let Some(v) = report.ece {
                metrics.push(format!("ece {v:.4}"));
            }
            if let Some(v) = report.mean_err {
                metrics.push(format!("mean_err {v:.4}"));
            }
            if let Some(v) = report.cov_err {
                metrics.push(format!("cov_err {v:.4}"));
            }
            metrics.push(format!("samples {}", report.retained_samples));
            println!("ok     {coords}  {}", metrics.join("  "));
        }
        (None, Some(error)) => println!("failed {coords}  {error}"),
        (None, None) => println!("failed {coords}  no report"),
    }
}

fn fmt_spread(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.4} +- {s:.4}"),
        _ => "-".to_string(),
    }
}
