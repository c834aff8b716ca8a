use std::collections::HashSet;

use noma_core::game::{action_effect, initial_grouping, is_nash_equilibrium, Action};
use noma_core::{resume_from, run_game, solve_all_powers, Grouping, LoopFinder, Network, SimConfig};
use proptest::prelude::*;

fn net(seed: u64, num_bs: usize, users: usize, channels: usize) -> Network {
    let mut c = SimConfig {
        num_users: users,
        num_channels: channels,
        ..SimConfig::default()
    };
    c.set_num_bs(num_bs);
    Network::generate(&c, seed, !seed).unwrap()
}

fn random_action(net: &Network, g: &Grouping, bs: usize, picks: &[(usize, usize)]) -> Option<Action> {
    let users = net.users_of_bs(bs);
    let mut moves = Vec::new();
    let mut seen = HashSet::new();
    for &(u, c) in picks {
        let n = users[u % users.len()];
        let c = c % net.num_channels();
        if c != g.channel_of(n) && seen.insert(n) {
            moves.push((n, c));
        }
    }
    Action::new(net, g, bs, moves).ok().filter(|a| !a.is_empty())
}

fn potential(net: &Network, g: &Grouping) -> (f64, f64) {
    let sol = solve_all_powers(net, g);
    (sol.infeasibility(), sol.feasible_power())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effect_differences_are_power_differences(
        seed in any::<u64>(),
        users in 4usize..20,
        a in prop::collection::vec((0usize..32, 0usize..32), 1..4),
        b in prop::collection::vec((0usize..32, 0usize..32), 1..4),
        bs in 0usize..4,
    ) {
        let net = net(seed, 4, users, 5);
        prop_assume!(!net.users_of_bs(bs).is_empty());
        let g = initial_grouping(&net);
        prop_assume!(solve_all_powers(&net, &g).feasible);
        let (Some(a), Some(b)) = (random_action(&net, &g, bs, &a), random_action(&net, &g, bs, &b)) else {
            return Ok(());
        };
        let pa = solve_all_powers(&net, &a.apply(&g)).total_power();
        let pb = solve_all_powers(&net, &b.apply(&g)).total_power();
        let (Some(pa), Some(pb)) = (pa, pb) else { return Ok(()) };
        let lhs = action_effect(&net, &g, &a) - action_effect(&net, &g, &b);
        prop_assert!((lhs - (pa - pb)).abs() <= 1e-9 * pa.max(pb));
    }

    #[test]
    fn undoing_an_action_restores_the_grouping(
        seed in any::<u64>(),
        users in 2usize..20,
        a in prop::collection::vec((0usize..32, 0usize..32), 1..5),
        bs in 0usize..4,
    ) {
        let net = net(seed, 4, users, 5);
        prop_assume!(!net.users_of_bs(bs).is_empty());
        let g = initial_grouping(&net);
        let Some(a) = random_action(&net, &g, bs, &a) else { return Ok(()) };
        let after = a.apply(&g);
        prop_assert_eq!(a.inverse(&g).apply(&after), g);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_never_revisit_and_match_fresh_solves(
        seed in any::<u64>(),
        users in 8usize..32,
        eba in any::<bool>(),
    ) {
        let net = net(seed, 4, users, 6);
        let finder = if eba { LoopFinder::Eba } else { LoopFinder::fga() };
        let out = run_game(&net, finder).unwrap();
        prop_assert!(out.trace.converged);
        let mut g = initial_grouping(&net);
        let mut seen = HashSet::from([g.clone()]);
        let mut before = potential(&net, &g);
        for e in &out.trace.iterations {
            prop_assert_eq!(e.action.bs, e.bs);
            g = e.action.apply(&g);
            prop_assert!(seen.insert(g.clone()));
            let after = potential(&net, &g);
            prop_assert!(after.0 < before.0 || (after.0 == before.0 && after.1 < before.1));
            let fresh = solve_all_powers(&net, &g).total_power_or_inf();
            let logged = e.total_power_after_w;
            prop_assert!(fresh == logged || (fresh / logged - 1.0).abs() <= 1e-9);
            before = after;
        }
        prop_assert_eq!(&g, &out.grouping);
        prop_assert_eq!(out.power.total_power_or_inf(), out.trace.final_total_power_w);
    }

    #[test]
    fn eba_games_end_without_improving_leagues(seed in any::<u64>(), users in 3usize..10) {
        let net = net(seed, 2, users, 3);
        prop_assume!((0..2).all(|m| net.users_of_bs(m).len() <= 6));
        let out = run_game(&net, LoopFinder::Eba).unwrap();
        prop_assume!(out.power.feasible);
        prop_assert!(is_nash_equilibrium(&net, &out.grouping, 3).unwrap());
    }

    #[test]
    fn resuming_at_the_end_is_quiet(seed in any::<u64>(), users in 4usize..24) {
        let net = net(seed, 4, users, 5);
        let out = run_game(&net, LoopFinder::fga()).unwrap();
        let again = resume_from(&net, out.grouping.clone(), LoopFinder::fga()).unwrap();
        prop_assert!(again.trace.iterations.is_empty());
        prop_assert_eq!(again.grouping, out.grouping);
    }
}
