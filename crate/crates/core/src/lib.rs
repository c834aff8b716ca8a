//! QoS-aware user grouping for downlink multi-cell NOMA.
//!
//! Users of each BS are split into subchannel groups; inside a group they share
//! the channel by superposition coding and successive interference
//! cancellation. Given a grouping, [`power`] computes the minimum transmit
//! power that meets every user's target rate under inter-cell interference.
//! [`game`] improves the grouping one BS at a time, and [`graph`] finds the
//! improving moves as negative cycles in a per-BS league graph.

pub mod baselines;
pub mod error;
pub mod game;
pub mod graph;
pub mod harness;
pub mod power;
pub mod scenario;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use game::{run_game, resume_from, GameOutcome, GameTrace, LoopFinder};
pub use graph::{League, LeagueGraph, LeagueKind, Node};
pub use power::{solve_all_powers, DecodeOrder, Grouping, PowerSolution};
pub use scenario::{ChannelGains, Network, Scenario, SimConfig};
