//! Seeded experiment batches and their CSV output.
//!
//! An experiment is a sweep over network sizes crossed with a list of
//! strategies. For every sweep point and trial one network is drawn and every
//! strategy runs on that same network. Rows are ordered by
//! `(point, trial, strategy)` regardless of scheduling, and unless wall-clock
//! timing is requested the CSV is a pure function of the spec.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{grouping_count, run_strategy, StrategyKind, EXHAUSTIVE_LIMIT};
use crate::error::{invalid, Result};
use crate::game::{run_game, watts_to_dbm, LoopFinder};
use crate::power::improvement_tolerance;
use crate::scenario::{Network, SimConfig};

/// Lists of values to cross. An empty list means "take the value from the
/// scenario table".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub users: Vec<usize>,
    pub groups: Vec<usize>,
    pub bs: Vec<usize>,
    pub rate_ranges_bps: Vec<[f64; 2]>,
    /// Budget factors substituted for a bare `fga` strategy.
    pub alphas: Vec<f64>,
}

/// Experiment config file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Strategy names as accepted by [`StrategyKind`]'s parser.
    pub strategies: Vec<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Adds a `wallclock_ms` column.
    #[serde(default)]
    pub record_timing: bool,
    /// Adds an exhaustive-search row wherever the instance is small enough.
    #[serde(default)]
    pub oracle: bool,
    /// Directory for per-trial game logs.
    #[serde(default)]
    pub trace_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub scenario: SimConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            trials: 1,
            base_seed: 0,
            strategies: vec!["eba".into()],
            output: None,
            record_timing: false,
            oracle: false,
            trace_dir: None,
            sweep: Sweep::default(),
            scenario: SimConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("no strategies given"));
        }
        self.strategy_kinds()?;
        if self.sweep.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("alphas must be positive"));
        }
        for point in self.points() {
            point.config(&self.scenario).validate()?;
        }
        Ok(())
    }

    /// Parsed strategies, with a bare `fga` expanded over the swept alphas.
    pub fn strategy_kinds(&self) -> Result<Vec<StrategyKind>> {
        let mut out = Vec::new();
        for name in &self.strategies {
            if name.trim().eq_ignore_ascii_case("fga") && !self.sweep.alphas.is_empty() {
                out.extend(self.sweep.alphas.iter().map(|&a| StrategyKind::Fga(a)));
            } else {
                out.push(name.parse()?);
            }
        }
        Ok(out)
    }

    /// Sweep points in output order: BS count, then users, groups, rate range.
    pub fn points(&self) -> Vec<SweepPoint> {
        let s = &self.scenario;
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let rates = if self.sweep.rate_ranges_bps.is_empty() {
            vec![s.rate_range_bps]
        } else {
            self.sweep.rate_ranges_bps.clone()
        };
        let mut out = Vec::new();
        for &num_bs in &or(&self.sweep.bs, s.num_bs) {
            for &num_users in &or(&self.sweep.users, s.num_users) {
                for &num_groups in &or(&self.sweep.groups, s.num_channels) {
                    for &rate_range_bps in &rates {
                        out.push(SweepPoint {
                            num_bs,
                            num_users,
                            num_groups,
                            rate_range_bps,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub num_bs: usize,
    pub num_users: usize,
    pub num_groups: usize,
    pub rate_range_bps: [f64; 2],
}

impl SweepPoint {
    /// The scenario table with this point's values substituted. The BS layout
    /// is regenerated on a grid when the count no longer matches.
    pub fn config(&self, base: &SimConfig) -> SimConfig {
        let mut config = base.clone();
        if config.bs_positions.len() != self.num_bs {
            config.set_num_bs(self.num_bs);
        }
        config.num_bs = self.num_bs;
        config.num_users = self.num_users;
        config.num_channels = self.num_groups;
        config.rate_range_bps = self.rate_range_bps;
        config
    }
}

/// Mixes seed components; distinct inputs give unrelated outputs.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(state)));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Network of trial `trial` at sweep point `point`. Every strategy of the
/// experiment sees this network.
pub fn trial_network(spec: &ExperimentSpec, point_index: usize, trial: usize) -> Result<(u64, Network)> {
    let point = spec.points()[point_index];
    let seed = derive_seed(&[spec.base_seed, point_index as u64, trial as u64]);
    let net = Network::generate(&point.config(&spec.scenario), derive_seed(&[seed, 0]), derive_seed(&[seed, 1]))?;
    Ok((seed, net))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub point: SweepPoint,
    pub point_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub strategy: String,
    pub feasible: bool,
    /// `+inf` when infeasible.
    pub total_power_w: f64,
    pub total_power_dbm: f64,
    /// Mean inter-cell interference over users.
    pub avg_intercell_interference_w: f64,
    pub game_iterations: usize,
    pub wallclock_ms: Option<f64>,
}

pub const CSV_HEADER: [&str; 13] = [
    "num_bs",
    "num_users",
    "num_groups",
    "rate_low_bps",
    "rate_high_bps",
    "trial",
    "seed",
    "strategy",
    "feasible",
    "total_power_w",
    "total_power_dbm",
    "avg_intercell_interference_w",
    "game_iterations",
];

fn run_one(
    spec: &ExperimentSpec,
    net: &Network,
    kind: StrategyKind,
    trace_name: &str,
) -> Result<(bool, f64, f64, usize)> {
    let (power, iterations) = match kind {
        StrategyKind::Eba | StrategyKind::Fga(_) if spec.trace_dir.is_some() => {
            let finder = match kind {
                StrategyKind::Fga(alpha) => LoopFinder::Fga { alpha },
                _ => LoopFinder::Eba,
            };
            let out = run_game(net, finder)?;
            let dir = spec.trace_dir.as_ref().expect("checked");
            fs::create_dir_all(dir)?;
            out.trace.write_log(fs::File::create(dir.join(trace_name))?)?;
            (out.power, out.trace.iterations.len())
        }
        _ => {
            let out = run_strategy(net, kind)?;
            (out.power, out.iterations)
        }
    };
    Ok((power.feasible, power.total_power_or_inf(), power.mean_interference(), iterations))
}

/// Runs every `(point, trial, strategy)` combination.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let kinds = spec.strategy_kinds()?;
    let points = spec.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();

    let per_job: Vec<Result<Vec<TrialResult>>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let (seed, net) = trial_network(spec, p, t)?;
            let mut strategies = kinds.clone();
            if spec.oracle
                && grouping_count(&net) <= EXHAUSTIVE_LIMIT
                && !strategies.contains(&StrategyKind::Exhaustive)
            {
                strategies.push(StrategyKind::Exhaustive);
            }
            let mut rows = Vec::with_capacity(strategies.len());
            for kind in strategies {
                let name = kind.to_string();
                let started = Instant::now();
                let trace_name = format!("p{p}_t{t}_{}.log", name.replace(':', "-"));
                let (feasible, total, interference, iterations) = run_one(spec, &net, kind, &trace_name)?;
                let elapsed = started.elapsed().as_secs_f64() * 1e3;
                rows.push(TrialResult {
                    point: points[p],
                    point_index: p,
                    trial: t,
                    seed,
                    strategy: name,
                    feasible,
                    total_power_w: total,
                    total_power_dbm: watts_to_dbm(total),
                    avg_intercell_interference_w: interference,
                    game_iterations: iterations,
                    wallclock_ms: spec.record_timing.then_some(elapsed),
                });
            }
            Ok(rows)
        })
        .collect();

    let mut out = Vec::new();
    for rows in per_job {
        out.extend(rows?);
    }
    Ok(out)
}

/// Writes the results table. The timing column appears only when some row has it.
pub fn write_results_csv<W: Write>(results: &[TrialResult], writer: W) -> Result<()> {
    let timing = results.iter().any(|r| r.wallclock_ms.is_some());
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if timing {
        header.push("wallclock_ms");
    }
    out.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.point.num_bs.to_string(),
            r.point.num_users.to_string(),
            r.point.num_groups.to_string(),
            r.point.rate_range_bps[0].to_string(),
            r.point.rate_range_bps[1].to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.strategy.clone(),
            r.feasible.to_string(),
            r.total_power_w.to_string(),
            r.total_power_dbm.to_string(),
            r.avg_intercell_interference_w.to_string(),
            r.game_iterations.to_string(),
        ];
        if timing {
            row.push(r.wallclock_ms.map(|t| format!("{t:.3}")).unwrap_or_default());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs the experiment and writes the CSV to the spec's output path, if any.
pub fn run_and_write(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    let results = run_experiment(spec)?;
    if let Some(path) = &spec.output {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_results_csv(&results, fs::File::create(path)?)?;
    }
    Ok(results)
}

/// Per-(point, strategy) statistics. Power statistics cover feasible trials only.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: SweepPoint,
    pub strategy: String,
    pub trials: usize,
    pub feasible: usize,
    pub mean_power_w: f64,
    pub std_power_w: f64,
    pub mean_interference_w: f64,
    pub std_interference_w: f64,
    pub mean_iterations: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows by `(point, strategy)` in first-seen order.
fn grouped(results: &[TrialResult]) -> Vec<((usize, String), Vec<&TrialResult>)> {
    let mut out: Vec<((usize, String), Vec<&TrialResult>)> = Vec::new();
    for r in results {
        let key = (r.point_index, r.strategy.clone());
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(r),
            None => out.push((key, vec![r])),
        }
    }
    out
}

pub fn summarize(results: &[TrialResult]) -> Vec<SummaryRow> {
    grouped(results)
        .into_iter()
        .map(|((_, strategy), rows)| {
            let ok: Vec<&&TrialResult> = rows.iter().filter(|r| r.feasible).collect();
            let (mean_power_w, std_power_w) = mean_std(&ok.iter().map(|r| r.total_power_w).collect::<Vec<_>>());
            let (mean_interference_w, std_interference_w) =
                mean_std(&ok.iter().map(|r| r.avg_intercell_interference_w).collect::<Vec<_>>());
            SummaryRow {
                point: rows[0].point,
                strategy,
                trials: rows.len(),
                feasible: ok.len(),
                mean_power_w,
                std_power_w,
                mean_interference_w,
                std_interference_w,
                mean_iterations: rows.iter().map(|r| r.game_iterations as f64).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "num_bs",
        "num_users",
        "num_groups",
        "rate_low_bps",
        "rate_high_bps",
        "strategy",
        "trials",
        "feasible",
        "mean_power_w",
        "std_power_w",
        "mean_power_dbm",
        "mean_interference_w",
        "std_interference_w",
        "mean_iterations",
    ])?;
    for s in summary {
        out.write_record([
            s.point.num_bs.to_string(),
            s.point.num_users.to_string(),
            s.point.num_groups.to_string(),
            s.point.rate_range_bps[0].to_string(),
            s.point.rate_range_bps[1].to_string(),
            s.strategy.clone(),
            s.trials.to_string(),
            s.feasible.to_string(),
            s.mean_power_w.to_string(),
            s.std_power_w.to_string(),
            watts_to_dbm(s.mean_power_w).to_string(),
            s.mean_interference_w.to_string(),
            s.std_interference_w.to_string(),
            s.mean_iterations.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Head-to-head record of `first` against `second` on matched trials.
#[derive(Debug, Clone, PartialEq)]
pub struct WinRate {
    pub point: SweepPoint,
    pub first: String,
    pub second: String,
    pub trials: usize,
    /// `first` used strictly less power.
    pub wins: usize,
    pub ties: usize,
}

impl WinRate {
    pub fn win_or_tie_rate(&self) -> f64 {
        (self.wins + self.ties) as f64 / self.trials.max(1) as f64
    }
}

/// Pairwise comparison of every ordered strategy pair at every point.
/// Powers within [`improvement_tolerance`] of each other tie.
pub fn win_rates(results: &[TrialResult]) -> Vec<WinRate> {
    let groups = grouped(results);
    let mut out = Vec::new();
    for ((pa, sa), rows_a) in &groups {
        for ((pb, sb), rows_b) in &groups {
            if pa != pb || sa == sb {
                continue;
            }
            let mut rate = WinRate {
                point: rows_a[0].point,
                first: sa.clone(),
                second: sb.clone(),
                trials: 0,
                wins: 0,
                ties: 0,
            };
            for a in rows_a {
                let Some(b) = rows_b.iter().find(|b| b.trial == a.trial) else {
                    continue;
                };
                rate.trials += 1;
                let (x, y) = (a.total_power_w, b.total_power_w);
                if x == y || (x.is_finite() && y.is_finite() && (x - y).abs() <= improvement_tolerance(y)) {
                    rate.ties += 1;
                } else if x < y {
                    rate.wins += 1;
                }
            }
            out.push(rate);
        }
    }
    out
}

pub fn write_win_rates_csv<W: Write>(rates: &[WinRate], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "num_bs", "num_users", "num_groups", "first", "second", "trials", "wins", "ties", "losses",
    ])?;
    for r in rates {
        out.write_record([
            r.point.num_bs.to_string(),
            r.point.num_users.to_string(),
            r.point.num_groups.to_string(),
            r.first.clone(),
            r.second.clone(),
            r.trials.to_string(),
            r.wins.to_string(),
            r.ties.to_string(),
            (r.trials - r.wins - r.ties).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
