//! Fixtures shared by the benchmarks.

use noma_core::game::initial_grouping;
use noma_core::{Grouping, Network, SimConfig};

/// Four BSs, `num_users` users on `num_channels` subchannels.
pub fn network(num_users: usize, num_channels: usize, seed: u64) -> Network {
    let config = SimConfig {
        num_users,
        num_channels,
        ..SimConfig::default()
    };
    Network::generate(&config, seed, seed + 1).expect("scenario")
}

/// A network whose starting grouping is feasible, with that grouping.
pub fn feasible_start(num_users: usize, num_channels: usize) -> (Network, Grouping) {
    (0..)
        .map(|seed| network(num_users, num_channels, seed))
        .map(|net| {
            let g = initial_grouping(&net);
            (net, g)
        })
        .find(|(net, g)| noma_core::solve_all_powers(net, g).feasible)
        .expect("some seed is feasible")
}
