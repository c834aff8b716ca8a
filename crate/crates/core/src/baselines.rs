//! Reference grouping strategies and brute-force oracles.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::game::{run_game, LoopFinder};
use crate::graph::{apply_league, build_graph, League, LeagueKind, DEFAULT_ALPHA};
use crate::power::{
    channel_power, improvement_tolerance, solve_all_powers, solve_all_powers_with, DecodeOrder, Grouping,
    PowerSolution,
};
use crate::scenario::Network;

/// Largest number of joint assignments the exhaustive oracle will visit.
pub const EXHAUSTIVE_LIMIT: f64 = 1e6;

/// Cap on cycles visited by [`enumerate_leagues`].
pub const ENUMERATION_LIMIT: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    Eba,
    Fga(f64),
    Sccd,
    GaleShapley,
    Exhaustive,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Eba => f.write_str("eba"),
            StrategyKind::Fga(alpha) => write!(f, "fga:{alpha}"),
            StrategyKind::Sccd => f.write_str("sccd"),
            StrategyKind::GaleShapley => f.write_str("gale-shapley"),
            StrategyKind::Exhaustive => f.write_str("exhaustive"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    /// Accepts `eba`, `fga`, `fga:<alpha>`, `sccd`, `gale-shapley` (or `gs`), `exhaustive`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "eba" => Ok(StrategyKind::Eba),
            "fga" => Ok(StrategyKind::Fga(DEFAULT_ALPHA)),
            "sccd" => Ok(StrategyKind::Sccd),
            "gale-shapley" | "gs" => Ok(StrategyKind::GaleShapley),
            "exhaustive" => Ok(StrategyKind::Exhaustive),
            other => match other.strip_prefix("fga:") {
                Some(a) => match a.parse::<f64>() {
                    Ok(alpha) if alpha.is_finite() && alpha > 0.0 => Ok(StrategyKind::Fga(alpha)),
                    _ => Err(invalid(format!("bad FGA budget factor {a:?}"))),
                },
                None => Err(invalid(format!("unknown strategy {s:?}"))),
            },
        }
    }
}

/// Result of running one strategy on one network.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub grouping: Grouping,
    pub power: PowerSolution,
    /// Accepted actions, zero for one-shot strategies.
    pub iterations: usize,
}

pub fn run_strategy(net: &Network, kind: StrategyKind) -> Result<StrategyOutcome> {
    let (grouping, iterations) = match kind {
        StrategyKind::Eba | StrategyKind::Fga(_) => {
            let finder = match kind {
                StrategyKind::Fga(alpha) => LoopFinder::Fga { alpha },
                _ => LoopFinder::Eba,
            };
            let out = run_game(net, finder)?;
            return Ok(StrategyOutcome {
                iterations: out.trace.iterations.len(),
                grouping: out.grouping,
                power: out.power,
            });
        }
        StrategyKind::Sccd => (sccd_grouping(net), 0),
        StrategyKind::GaleShapley => (gale_shapley_grouping(net), 0),
        StrategyKind::Exhaustive => (exhaustive_best_grouping(net)?.0, 0),
    };
    let power = solve_all_powers(net, &grouping);
    Ok(StrategyOutcome {
        grouping,
        power,
        iterations,
    })
}

/// Best own-BS gain of a user over all channels.
fn gain_summary(net: &Network, user: usize) -> f64 {
    let m = net.bs_of(user);
    (0..net.num_channels())
        .map(|g| net.gain(m, g, user))
        .fold(0.0, f64::max)
}

/// Users of `bs` by descending gain summary, ties by id.
fn ranked_users(net: &Network, bs: usize) -> Vec<usize> {
    let mut users = net.users_of_bs(bs).to_vec();
    users.sort_by(|&a, &b| gain_summary(net, b).total_cmp(&gain_summary(net, a)).then(a.cmp(&b)));
    users
}

/// Strongest user paired with the weakest, second with second weakest, and so
/// on; pair `k` goes to channel `k mod G`. An odd middle user is alone.
pub fn sccd_grouping(net: &Network) -> Grouping {
    let mut channel_of = vec![0; net.num_users()];
    for bs in 0..net.num_bs() {
        let ranked = ranked_users(net, bs);
        let len = ranked.len();
        for k in 0..len.div_ceil(2) {
            let g = k % net.num_channels();
            channel_of[ranked[k]] = g;
            channel_of[ranked[len - 1 - k]] = g;
        }
    }
    Grouping::new(net, channel_of).expect("channel indices in range")
}

/// Users propose to channels in order of decreasing own gain; each channel
/// holds at most `ceil(|U^m| / G)` users and keeps the strongest proposers.
pub fn gale_shapley_grouping(net: &Network) -> Grouping {
    let num_channels = net.num_channels();
    let mut channel_of = vec![0; net.num_users()];
    for bs in 0..net.num_bs() {
        let users = net.users_of_bs(bs);
        if users.is_empty() {
            continue;
        }
        let quota = users.len().div_ceil(num_channels);
        let prefs: HashMap<usize, Vec<usize>> = users
            .iter()
            .map(|&n| {
                let mut order: Vec<usize> = (0..num_channels).collect();
                order.sort_by(|&a, &b| net.gain(bs, b, n).total_cmp(&net.gain(bs, a, n)).then(a.cmp(&b)));
                (n, order)
            })
            .collect();
        let mut next = HashMap::<usize, usize>::new();
        let mut held: Vec<Vec<usize>> = vec![Vec::new(); num_channels];
        let mut free: Vec<usize> = users.iter().rev().copied().collect();
        while let Some(n) = free.pop() {
            let k = next.entry(n).or_insert(0);
            let g = prefs[&n][*k];
            *k += 1;
            held[g].push(n);
            if held[g].len() > quota {
                // weakest on this channel, ties to the larger id
                let (pos, _) = held[g]
                    .iter()
                    .enumerate()
                    .min_by(|(_, &a), (_, &b)| net.gain(bs, g, a).total_cmp(&net.gain(bs, g, b)).then(b.cmp(&a)))
                    .expect("non-empty");
                free.push(held[g].swap_remove(pos));
            }
        }
        for (g, members) in held.iter().enumerate() {
            for &n in members {
                channel_of[n] = g;
            }
        }
    }
    Grouping::new(net, channel_of).expect("channel indices in range")
}

/// Powers under the channel-gain and rate-descending decode orders.
pub fn reference_sic_orders(net: &Network, grouping: &Grouping) -> (PowerSolution, PowerSolution) {
    (
        solve_all_powers_with(net, grouping, DecodeOrder::ChannelGain),
        solve_all_powers_with(net, grouping, DecodeOrder::RateDescending),
    )
}

/// Number of joint assignments, `G^N`.
pub fn grouping_count(net: &Network) -> f64 {
    (net.num_channels() as f64).powi(net.num_users() as i32)
}

/// Minimum-power grouping over every joint channel assignment.
///
/// Returns `(grouping, +inf)` with the all-zero assignment when nothing is
/// feasible.
pub fn exhaustive_best_grouping(net: &Network) -> Result<(Grouping, f64)> {
    let required = grouping_count(net);
    if required > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge {
            what: "exhaustive grouping search",
            required,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let (users, channels) = (net.num_users(), net.num_channels());
    let mut memo: Vec<HashMap<u64, f64>> = vec![HashMap::new(); channels];
    let mut power_of = |g: usize, mask: u64| -> f64 {
        *memo[g].entry(mask).or_insert_with(|| {
            let mut members = vec![Vec::new(); net.num_bs()];
            for n in 0..users {
                if mask >> n & 1 == 1 {
                    members[net.bs_of(n)].push(n);
                }
            }
            channel_power(net, g, &members)
        })
    };

    let mut assign = vec![0usize; users];
    let mut best = (assign.clone(), f64::INFINITY);
    loop {
        let mut masks = vec![0u64; channels];
        for (n, &g) in assign.iter().enumerate() {
            masks[g] |= 1 << n;
        }
        let mut total = 0.0;
        for (g, &mask) in masks.iter().enumerate() {
            total += power_of(g, mask);
            if total >= best.1 {
                break;
            }
        }
        if total < best.1 {
            best = (assign.clone(), total);
        }
        // odometer step
        let mut k = 0;
        while k < users {
            assign[k] += 1;
            if assign[k] < channels {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
        if k == users {
            break;
        }
    }
    Ok((Grouping::new(net, best.0)?, best.1))
}

/// Every improving shift or exchange league of at most `max_len` nodes in
/// every BS, each checked by a full solve before and after.
pub fn enumerate_leagues(net: &Network, grouping: &Grouping, max_len: usize) -> Result<Vec<League>> {
    let before = solve_all_powers(net, grouping);
    let before_w = before.total_power_or_inf();
    let tol = improvement_tolerance(before_w);
    let max_len = max_len.min(net.num_channels());
    let mut out = Vec::new();
    let mut visited = 0usize;
    for bs in 0..net.num_bs() {
        if net.users_of_bs(bs).is_empty() {
            continue;
        }
        let graph = build_graph(net, grouping, bs);
        let nodes = graph.nodes().to_vec();
        let len = nodes.len();
        let mut seen_moves: HashSet<Vec<(usize, usize)>> = HashSet::new();
        let mut path = Vec::with_capacity(max_len);
        for start in 0..len {
            path.clear();
            path.push(start);
            let mask = 1u64 << graph.group_of(start);
            let mut ctx = Enumeration {
                graph: &graph,
                max_len,
                visited: &mut visited,
                found: Vec::new(),
            };
            ctx.extend(&mut path, mask)?;
            for cycle in ctx.found {
                let league = League {
                    bs,
                    kind: if cycle.iter().any(|&i| nodes[i].is_virtual()) {
                        LeagueKind::Shift
                    } else {
                        LeagueKind::Exchange
                    },
                    cycle: cycle.iter().map(|&i| nodes[i]).collect(),
                    groups: cycle.iter().map(|&i| graph.group_of(i)).collect(),
                    predicted_delta: graph.cycle_weight(&cycle),
                };
                let mut moves = league.moves();
                moves.sort_unstable();
                if moves.is_empty() || !seen_moves.insert(moves) {
                    continue;
                }
                let after = solve_all_powers(net, &apply_league(grouping, &league)?);
                let improves = match (before.feasible, after.total_power()) {
                    (_, None) => false,
                    (false, Some(_)) => true,
                    (true, Some(a)) => a - before_w < -tol,
                };
                if improves {
                    out.push(league);
                }
            }
        }
    }
    Ok(out)
}

struct Enumeration<'a> {
    graph: &'a crate::graph::LeagueGraph,
    max_len: usize,
    visited: &'a mut usize,
    found: Vec<Vec<usize>>,
}

impl Enumeration<'_> {
    /// Cycles through `path[0]` whose other nodes all have larger indices,
    /// so each cycle is produced once.
    fn extend(&mut self, path: &mut Vec<usize>, mask: u64) -> Result<()> {
        let (start, tail) = (path[0], *path.last().expect("non-empty"));
        if path.len() >= 2 && self.graph.weight(tail, start) != f64::INFINITY {
            *self.visited += 1;
            if *self.visited > ENUMERATION_LIMIT {
                return Err(Error::InstanceTooLarge {
                    what: "league enumeration",
                    required: *self.visited as f64,
                    limit: ENUMERATION_LIMIT as f64,
                });
            }
            self.found.push(path.clone());
        }
        if path.len() == self.max_len {
            return Ok(());
        }
        for j in start + 1..self.graph.len() {
            let bit = 1u64 << self.graph.group_of(j);
            if mask & bit != 0 || self.graph.weight(tail, j) == f64::INFINITY {
                continue;
            }
            path.push(j);
            self.extend(path, mask | bit)?;
            path.pop();
        }
        Ok(())
    }
}
