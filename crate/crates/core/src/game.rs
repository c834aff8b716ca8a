//! Best-response grouping game across BSs.
//!
//! Every BS is a player whose payoff for regrouping its own users is the
//! resulting change in network-wide transmit power, so the total power is an
//! exact potential. Players move in turn; each move is an improving league
//! found in the player's league graph and re-checked with a full solve. The
//! potential strictly decreases with every accepted move, so the loop ends at
//! a grouping where no player finds an improving league.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;

use crate::baselines::enumerate_leagues;
use crate::error::{invalid, Error, Result};
use crate::graph::{
    apply_league, build_graph_with, fga_candidates, find_negative_loop_eba, GraphMode, League, DEFAULT_ALPHA,
    REPAIR_REL_TOL,
};
use crate::power::{improvement_tolerance, solve_all_powers, Grouping, PowerSolution};
use crate::scenario::Network;

/// How a BS searches its league graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopFinder {
    /// Exact search; falls back to [`LoopFinder::Fga`] with the default
    /// budget when the search budget runs out.
    Eba,
    Fga { alpha: f64 },
}

impl LoopFinder {
    pub fn fga() -> Self {
        LoopFinder::Fga {
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// A regrouping of some users of one BS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub bs: usize,
    /// `(user, target channel)`, each user at most once.
    pub moves: Vec<(usize, usize)>,
}

impl Action {
    pub fn new(net: &Network, grouping: &Grouping, bs: usize, moves: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(n, g) in &moves {
            if n >= net.num_users() || net.bs_of(n) != bs {
                return Err(invalid(format!("user {n} is not served by BS {bs}")));
            }
            if g >= net.num_channels() {
                return Err(invalid(format!("no channel {g}")));
            }
            if grouping.channel_of(n) == g {
                return Err(invalid(format!("user {n} is already on channel {g}")));
            }
            if !seen.insert(n) {
                return Err(invalid(format!("user {n} moved twice")));
            }
        }
        Ok(Self { bs, moves })
    }

    pub fn from_league(league: &League) -> Self {
        Self {
            bs: league.bs,
            moves: league.moves(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn apply(&self, grouping: &Grouping) -> Grouping {
        let mut out = grouping.clone();
        for &(n, g) in &self.moves {
            out.set_channel(n, g);
        }
        out
    }

    /// The action undoing `self` when applied after it.
    pub fn inverse(&self, before: &Grouping) -> Self {
        Self {
            bs: self.bs,
            moves: self
                .moves
                .iter()
                .map(|&(n, _)| (n, before.channel_of(n)))
                .collect(),
        }
    }
}

/// Change in total power caused by `action`, from two full solves.
///
/// `+inf` when either side is infeasible, except that moving from an
/// infeasible grouping to a feasible one is `-inf`.
pub fn action_effect(net: &Network, grouping: &Grouping, action: &Action) -> f64 {
    let before = solve_all_powers(net, grouping).total_power();
    let after = solve_all_powers(net, &action.apply(grouping)).total_power();
    match (before, after) {
        (Some(b), Some(a)) => a - b,
        (None, Some(_)) => f64::NEG_INFINITY,
        _ => f64::INFINITY,
    }
}

/// Each user on the channel where its own BS's gain is largest (lowest index on ties).
pub fn initial_grouping(net: &Network) -> Grouping {
    let channels = (0..net.num_users())
        .map(|n| {
            let m = net.bs_of(n);
            (0..net.num_channels()).fold(0, |best, g| {
                if net.gain(m, g, n) > net.gain(m, best, n) {
                    g
                } else {
                    best
                }
            })
        })
        .collect();
    Grouping::new(net, channels).expect("channel indices in range")
}

/// True when no BS has an improving league of at most `max_league_len` nodes.
pub fn is_nash_equilibrium(net: &Network, grouping: &Grouping, max_league_len: usize) -> Result<bool> {
    Ok(enumerate_leagues(net, grouping, max_league_len)?.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub bs: usize,
    pub action: Action,
    /// `+inf` while infeasible.
    pub total_power_before_w: f64,
    pub total_power_after_w: f64,
    /// Summed channel infeasibility, zero once feasible.
    pub infeasibility_before: f64,
    pub infeasibility_after: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameTrace {
    /// Accepted actions in order.
    pub iterations: Vec<TraceEntry>,
    pub converged: bool,
    pub final_total_power_w: f64,
    /// Full passes over the BSs, including the final quiet one.
    pub sweeps: usize,
    /// Some EBA search ran out of budget and fell back to the greedy finder.
    pub eba_budget_exhausted: bool,
}

impl GameTrace {
    /// One tab-separated line per accepted action:
    /// `iteration bs moves before_dbm after_dbm delta_db`.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# iteration\tbs\tmoves\tbefore_dbm\tafter_dbm\tdelta_db")?;
        for (k, e) in self.iterations.iter().enumerate() {
            let mut moves = String::new();
            for (i, (n, g)) in e.action.moves.iter().enumerate() {
                if i > 0 {
                    moves.push(',');
                }
                let _ = write!(moves, "{n}->{g}");
            }
            let (before, after) = (watts_to_dbm(e.total_power_before_w), watts_to_dbm(e.total_power_after_w));
            writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                k + 1,
                e.bs,
                moves,
                before,
                after,
                after - before
            )?;
        }
        writeln!(
            out,
            "# converged={} sweeps={} final_dbm={:.6}",
            self.converged,
            self.sweeps,
            watts_to_dbm(self.final_total_power_w)
        )?;
        Ok(())
    }
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

#[derive(Debug, Clone)]
pub struct GameOutcome {
    pub grouping: Grouping,
    pub power: PowerSolution,
    pub trace: GameTrace,
}

/// Ordering key of the game: total infeasibility first, then power on the
/// feasible channels. Equals total power whenever the grouping is feasible.
#[derive(Debug, Clone, Copy)]
struct Potential {
    infeasibility: f64,
    feasible_w: f64,
}

impl Potential {
    fn of(solution: &PowerSolution) -> Self {
        Potential {
            infeasibility: solution.infeasibility(),
            feasible_w: solution.feasible_power(),
        }
    }

    fn improved_by(&self, after: &Potential) -> bool {
        let slack = REPAIR_REL_TOL * self.infeasibility.max(1.0);
        if after.infeasibility < self.infeasibility - slack {
            return true;
        }
        after.infeasibility <= self.infeasibility
            && after.feasible_w < self.feasible_w - improvement_tolerance(self.feasible_w)
    }
}

/// Runs the game from [`initial_grouping`].
pub fn run_game(net: &Network, finder: LoopFinder) -> Result<GameOutcome> {
    resume_from(net, initial_grouping(net), finder)
}

/// Continues the game from a caller-supplied grouping, e.g. after users join
/// or leave.
pub fn resume_from(net: &Network, start: Grouping, finder: LoopFinder) -> Result<GameOutcome> {
    if start.num_users() != net.num_users() {
        return Err(invalid("grouping does not match the network"));
    }
    let mut grouping = start;
    let mut power = solve_all_powers(net, &grouping);
    let mut potential = Potential::of(&power);
    let mut trace = GameTrace::default();

    loop {
        trace.sweeps += 1;
        let mut moved = false;
        for bs in 0..net.num_bs() {
            if net.users_of_bs(bs).is_empty() {
                continue;
            }
            let modes: &[GraphMode] = if potential.infeasibility > 0.0 {
                &[GraphMode::Repair, GraphMode::Power]
            } else {
                &[GraphMode::Power]
            };
            'modes: for &mode in modes {
                let graph = build_graph_with(net, &grouping, bs, mode);
                let candidates = match finder {
                    LoopFinder::Eba => match find_negative_loop_eba(&graph) {
                        Ok(found) => found.into_iter().collect(),
                        Err(Error::BudgetExhausted(_)) => {
                            trace.eba_budget_exhausted = true;
                            fga_candidates(&graph, DEFAULT_ALPHA)
                        }
                        Err(e) => return Err(e),
                    },
                    LoopFinder::Fga { alpha } => fga_candidates(&graph, alpha),
                };
                for league in candidates {
                    let next = apply_league(&grouping, &league)?;
                    let next_power = solve_all_powers(net, &next);
                    let next_potential = Potential::of(&next_power);
                    if !potential.improved_by(&next_potential) {
                        continue;
                    }
                    trace.iterations.push(TraceEntry {
                        bs,
                        action: Action::from_league(&league),
                        total_power_before_w: power.total_power_or_inf(),
                        total_power_after_w: next_power.total_power_or_inf(),
                        infeasibility_before: potential.infeasibility,
                        infeasibility_after: next_potential.infeasibility,
                    });
                    grouping = next;
                    power = next_power;
                    potential = next_potential;
                    moved = true;
                    break 'modes;
                }
            }
        }
        if !moved {
            break;
        }
    }

    trace.converged = power.feasible;
    trace.final_total_power_w = power.total_power_or_inf();
    Ok(GameOutcome {
        grouping,
        power,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::toy_network;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn two_cell() -> Network {
        toy_network(2, 2, &[0, 0, 0, 1, 1, 1], &[1.0, 2.0, 0.5, 1.5, 0.7, 1.2], 1e-3, |m, g, n| {
            let own = [0, 0, 0, 1, 1, 1][n] == m;
            let base = if own { 1.0 } else { 0.03 };
            base * (0.5 + ((n * 5 + g * 3 + m) % 7) as f64 / 3.0)
        })
    }

    #[test]
    fn initial_grouping_takes_argmax_gain() {
        let net = toy_network(1, 3, &[0, 0], &[1.0, 1.0], 1.0, |_, g, n| {
            if n == 0 {
                [1e-12, 3e-12, 2e-12][g]
            } else {
                1e-12
            }
        });
        assert_eq!(initial_grouping(&net).channels(), &[1, 0]);
        let one = toy_network(1, 1, &[0, 0], &[1.0, 1.0], 1.0, |_, _, n| 1.0 + n as f64);
        assert_eq!(initial_grouping(&one).channels(), &[0, 0]);
    }

    #[test]
    fn action_validation() {
        let net = two_cell();
        let g = initial_grouping(&net);
        let other = 1 - g.channel_of(0);
        assert!(Action::new(&net, &g, 0, vec![(0, other)]).is_ok());
        assert!(Action::new(&net, &g, 0, vec![(3, 0)]).is_err());
        assert!(Action::new(&net, &g, 0, vec![(0, g.channel_of(0))]).is_err());
        assert!(Action::new(&net, &g, 0, vec![(0, other), (0, other)]).is_err());
    }

    #[test]
    fn action_effect_identity_and_inverse() {
        let net = two_cell();
        let g = initial_grouping(&net);
        assert_eq!(action_effect(&net, &g, &Action { bs: 0, moves: vec![] }), 0.0);
        let a = Action::new(&net, &g, 0, vec![(1, 1 - g.channel_of(1)), (2, 1 - g.channel_of(2))]).unwrap();
        let forward = action_effect(&net, &g, &a);
        let back = action_effect(&net, &a.apply(&g), &a.inverse(&g));
        assert!((forward + back).abs() <= 1e-9 * forward.abs().max(1e-18));
    }

    #[test]
    fn exact_potential_identity() {
        let net = two_cell();
        let g = initial_grouping(&net);
        let a = Action::new(&net, &g, 1, vec![(3, 1 - g.channel_of(3))]).unwrap();
        let b = Action::new(&net, &g, 1, vec![(4, 1 - g.channel_of(4)), (5, 1 - g.channel_of(5))]).unwrap();
        let lhs = action_effect(&net, &g, &a) - action_effect(&net, &g, &b);
        let pa = solve_all_powers(&net, &a.apply(&g)).total_power().unwrap();
        let pb = solve_all_powers(&net, &b.apply(&g)).total_power().unwrap();
        assert!(rel(lhs, pa - pb) < 1e-9);
    }

    #[test]
    fn nothing_to_do_with_one_user_per_bs_and_one_channel() {
        let net = toy_network(2, 1, &[0, 1], &[1.0, 1.0], 1e-3, |m, _, n| if m == n { 1.0 } else { 0.01 });
        let out = run_game(&net, LoopFinder::Eba).unwrap();
        assert!(out.trace.iterations.is_empty());
        assert!(out.trace.converged);
        assert_eq!(out.trace.sweeps, 1);
        assert!(is_nash_equilibrium(&net, &out.grouping, 1).unwrap());
    }

    #[test]
    fn games_decrease_power_and_end_stable() {
        let net = two_cell();
        for finder in [LoopFinder::Eba, LoopFinder::fga()] {
            let out = run_game(&net, finder).unwrap();
            assert!(out.trace.converged);
            let mut last = solve_all_powers(&net, &initial_grouping(&net)).total_power_or_inf();
            for e in &out.trace.iterations {
                assert_eq!(e.total_power_before_w, last);
                assert!(e.total_power_after_w < e.total_power_before_w);
                last = e.total_power_after_w;
            }
            assert_eq!(out.trace.final_total_power_w, last);
            if finder == LoopFinder::Eba {
                assert!(is_nash_equilibrium(&net, &out.grouping, net.num_channels()).unwrap());
            }
        }
    }

    #[test]
    fn resume_from_converged_is_quiet() {
        let net = two_cell();
        let out = run_game(&net, LoopFinder::Eba).unwrap();
        let again = resume_from(&net, out.grouping.clone(), LoopFinder::Eba).unwrap();
        assert!(again.trace.iterations.is_empty());
        assert_eq!(again.grouping, out.grouping);
    }

    #[test]
    fn trace_log_lines() {
        let net = two_cell();
        let bad = Grouping::new(&net, vec![0; 6]).unwrap();
        let out = resume_from(&net, bad, LoopFinder::fga()).unwrap();
        assert!(!out.trace.iterations.is_empty());
        let mut buf = Vec::new();
        out.trace.write_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), out.trace.iterations.len() + 2);
        let first: Vec<&str> = lines[1].split('\t').collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0], "1");
        assert!(first[5].parse::<f64>().unwrap() < 0.0);
    }

    #[test]
    fn dbm_conversion() {
        assert_eq!(watts_to_dbm(1.0), 30.0);
        assert_eq!(watts_to_dbm(1e-3), 0.0);
    }
}
