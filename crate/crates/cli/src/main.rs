use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use noma_core::harness::{
    run_and_write, summarize, win_rates, write_summary_csv, write_win_rates_csv, ExperimentSpec, SummaryRow,
};

/// Runs user-grouping experiments on random multi-cell NOMA networks.
#[derive(Debug, Parser)]
#[command(name = "noma-grouping", version)]
struct Args {
    /// Experiment file (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Strategy: eba, fga, fga:<alpha>, sccd, gale-shapley, exhaustive. Repeatable.
    #[arg(long = "strategy", value_name = "NAME")]
    strategies: Vec<String>,
    /// FGA budget factor. Repeatable; a bare `fga` runs once per value.
    #[arg(long = "alpha", value_name = "ALPHA")]
    alphas: Vec<f64>,
    /// Users per network. Repeatable to sweep.
    #[arg(long, value_name = "N")]
    users: Vec<usize>,
    /// Subchannels. Repeatable to sweep.
    #[arg(long, value_name = "G")]
    groups: Vec<usize>,
    /// Base stations, placed on a grid. Repeatable to sweep.
    #[arg(long, value_name = "M")]
    bs: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-trial results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-point mean and spread CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Pairwise win/tie/loss CSV.
    #[arg(long)]
    win_rates: Option<PathBuf>,
    /// Write a game log per trial into this directory.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Cross-check against the exhaustive optimum where it is small enough.
    #[arg(long)]
    oracle: bool,
    /// Add a wall-clock column to the results.
    #[arg(long)]
    timing: bool,
}

impl Args {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentSpec::default(),
        };
        if !self.strategies.is_empty() {
            spec.strategies = self.strategies.clone();
        }
        if !self.alphas.is_empty() {
            spec.sweep.alphas = self.alphas.clone();
        }
        if !self.users.is_empty() {
            spec.sweep.users = self.users.clone();
        }
        if !self.groups.is_empty() {
            spec.sweep.groups = self.groups.clone();
        }
        if !self.bs.is_empty() {
            spec.sweep.bs = self.bs.clone();
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if self.out.is_some() {
            spec.output = self.out.clone();
        }
        if self.trace_dir.is_some() {
            spec.trace_dir = self.trace_dir.clone();
        }
        spec.oracle |= self.oracle;
        spec.record_timing |= self.timing;
        spec.validate()?;
        Ok(spec)
    }
}

fn print_summary(rows: &[SummaryRow], mut out: impl Write) -> io::Result<()> {
    writeln!(
        out,
        "{:>3} {:>4} {:>4}  {:<14} {:>9} {:>12} {:>12} {:>8}",
        "M", "N", "G", "strategy", "feasible", "power_w", "interf_w", "iters"
    )?;
    let sci = |x: f64| if x.is_finite() { format!("{x:.4e}") } else { "-".into() };
    for r in rows {
        writeln!(
            out,
            "{:>3} {:>4} {:>4}  {:<14} {:>4}/{:<4} {:>12} {:>12} {:>8.1}",
            r.point.num_bs,
            r.point.num_users,
            r.point.num_groups,
            r.strategy,
            r.feasible,
            r.trials,
            sci(r.mean_power_w),
            sci(r.mean_interference_w),
            r.mean_iterations
        )?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let args = Args::parse();
    let spec = args.spec()?;
    let results = run_and_write(&spec)?;
    let summary = summarize(&results);
    if let Some(path) = &args.summary {
        write_summary_csv(&summary, File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    if let Some(path) = &args.win_rates {
        let rates = win_rates(&results);
        write_win_rates_csv(&rates, File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    print_summary(&summary, io::stdout().lock())?;
    Ok(())
}
