use noma_core::baselines::enumerate_leagues;
use noma_core::graph::{
    apply_league, build_graph, edge_weight, find_negative_loop_eba, find_negative_loop_fga, LeagueGraph,
};
use noma_core::power::channel_power;
use noma_core::{solve_all_powers, Grouping, Network, Node, SimConfig};
use proptest::prelude::*;

fn net(seed: u64, num_bs: usize, users: usize, channels: usize) -> Network {
    let mut c = SimConfig {
        num_users: users,
        num_channels: channels,
        ..SimConfig::default()
    };
    c.set_num_bs(num_bs);
    Network::generate(&c, seed, seed.rotate_left(17)).unwrap()
}

fn grouping(net: &Network, picks: &[usize]) -> Grouping {
    let g = net.num_channels();
    Grouping::new(net, (0..net.num_users()).map(|n| picks[n % picks.len()] % g).collect()).unwrap()
}

/// A differ-group cycle picked by `choice`, or none when the graph is too small.
fn cycle(graph: &LeagueGraph, choice: &[usize]) -> Option<Vec<usize>> {
    let len = graph.len();
    let mut used = 0u64;
    let mut out: Vec<usize> = Vec::new();
    for &c in choice {
        let free: Vec<usize> = (0..len).filter(|&i| used & (1 << graph.group_of(i)) == 0).collect();
        if free.is_empty() {
            break;
        }
        let i = free[c % free.len()];
        used |= 1 << graph.group_of(i);
        out.push(i);
    }
    (out.len() >= 2).then_some(out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cycle_weight_is_power_change(
        seed in any::<u64>(),
        num_bs in 1usize..=4,
        users in 4usize..24,
        picks in prop::collection::vec(0usize..64, 1..24),
        choice in prop::collection::vec(0usize..64, 2..6),
        bs_pick in 0usize..4,
    ) {
        let net = net(seed, num_bs, users, 5);
        let g = grouping(&net, &picks);
        let before = solve_all_powers(&net, &g);
        prop_assume!(before.feasible);
        let bs = bs_pick % num_bs;
        prop_assume!(!net.users_of_bs(bs).is_empty());
        let graph = build_graph(&net, &g, bs);
        let Some(c) = cycle(&graph, &choice) else { return Ok(()) };
        let predicted = graph.cycle_weight(&c);
        prop_assume!(predicted.is_finite());
        let nodes: Vec<Node> = c.iter().map(|&i| graph.nodes()[i]).collect();
        prop_assume!(nodes.iter().any(|n| !n.is_virtual()));
        let groups: Vec<usize> = c.iter().map(|&i| graph.group_of(i)).collect();
        let league = noma_core::League {
            bs,
            kind: noma_core::LeagueKind::Exchange,
            cycle: nodes,
            groups,
            predicted_delta: predicted,
        };
        let after = solve_all_powers(&net, &apply_league(&g, &league).unwrap());
        let total = before.total_power().unwrap();
        let actual = after.total_power().unwrap() - total;
        prop_assert!((predicted - actual).abs() <= 1e-9 * total, "{predicted} vs {actual}");
    }

    #[test]
    fn virtual_edges_only_remove(
        seed in any::<u64>(),
        users in 2usize..16,
        picks in prop::collection::vec(0usize..64, 1..16),
        who in any::<prop::sample::Index>(),
        target in 0usize..4,
    ) {
        let net = net(seed, 4, users, 4);
        let g = grouping(&net, &picks);
        let n = who.index(users);
        let bs = net.bs_of(n);
        let c = g.channel_of(n);
        prop_assume!(target != c);
        let members = g.channel_members(&net, c);
        let before = channel_power(&net, c, &members);
        prop_assume!(before.is_finite());
        let mut without = members.clone();
        without[bs].retain(|&u| u != n);
        let after = channel_power(&net, c, &without);
        let w = edge_weight(&net, &g, bs, Node::Virtual(target), Node::Real(n)).unwrap();
        prop_assert!(w == after - before || (w - (after - before)).abs() <= 1e-12 * before);
        // the same removal with the user parked elsewhere changes nothing else on this channel
        let mut moved = g.channels().to_vec();
        moved[n] = target;
        let sol = solve_all_powers(&net, &Grouping::new(&net, moved).unwrap());
        if sol.channel_feasible[c] {
            let on_c: f64 = (0..4).map(|m| sol.group_power[m][c]).sum();
            prop_assert!((on_c - after).abs() <= 1e-9 * before.max(1e-30));
        }
    }

    #[test]
    fn eba_agrees_with_enumeration(
        seed in any::<u64>(),
        users in 2usize..10,
        picks in prop::collection::vec(0usize..64, 1..10),
    ) {
        let net = net(seed, 2, users, 3);
        prop_assume!((0..2).all(|m| net.users_of_bs(m).len() <= 8));
        let g = grouping(&net, &picks);
        prop_assume!(solve_all_powers(&net, &g).feasible);
        let leagues = enumerate_leagues(&net, &g, 3).unwrap();
        for bs in 0..2 {
            if net.users_of_bs(bs).is_empty() {
                continue;
            }
            let found = find_negative_loop_eba(&build_graph(&net, &g, bs)).unwrap();
            let enumerated = leagues.iter().any(|l| l.bs == bs);
            prop_assert_eq!(found.is_some(), enumerated, "bs {}", bs);
        }
    }

    #[test]
    fn single_cell_loops_really_improve(
        seed in any::<u64>(),
        users in 2usize..20,
        picks in prop::collection::vec(0usize..64, 1..20),
    ) {
        let net = net(seed, 1, users, 4);
        let g = grouping(&net, &picks);
        let before = solve_all_powers(&net, &g).total_power().unwrap();
        let graph = build_graph(&net, &g, 0);
        let found = [find_negative_loop_eba(&graph).unwrap(), find_negative_loop_fga(&graph, 5.0)];
        for league in found.into_iter().flatten() {
            prop_assert!(league.predicted_delta < 0.0);
            for w in league.groups.windows(2) {
                prop_assert_ne!(w[0], w[1]);
            }
            let after = solve_all_powers(&net, &apply_league(&g, &league).unwrap()).total_power().unwrap();
            prop_assert!(after < before);
            prop_assert!(((after - before) - league.predicted_delta).abs() <= 1e-6 * before);
        }
    }
}
