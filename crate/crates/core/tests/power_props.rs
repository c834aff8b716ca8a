use noma_core::power::{
    achieved_rates, group_power_along, group_power_closed_form, per_user_powers, powers_along, sic_order,
};
use noma_core::{solve_all_powers, Grouping, Network, SimConfig};
use proptest::prelude::*;

/// Back-to-front SIC recursion written out directly.
fn recursion(order: &[usize], s: &[f64], r: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; s.len()];
    let mut later = 0.0;
    for &n in order.iter().rev() {
        p[n] = (2f64.powf(r[n]) - 1.0) * (1.0 / s[n] + later);
        later += p[n];
    }
    p
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn group() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|k| {
        (
            prop::collection::vec(1e-2f64..1e4, k),
            prop::collection::vec(0.1f64..4.0, k),
        )
    })
}

fn net(seed: u64, num_bs: usize, users: usize, channels: usize) -> Network {
    let mut c = SimConfig {
        num_users: users,
        num_channels: channels,
        ..SimConfig::default()
    };
    c.set_num_bs(num_bs);
    Network::generate(&c, seed, seed ^ 0x5eed).unwrap()
}

fn random_grouping(net: &Network, picks: &[usize]) -> Grouping {
    let g = net.num_channels();
    Grouping::new(net, (0..net.num_users()).map(|n| picks[n % picks.len()] % g).collect()).unwrap()
}

/// Rate of every user from the SINR at its own receiver and at every later decoder.
fn rates_from_sinr(net: &Network, g: &Grouping, p: &[f64], group_power: &[Vec<f64>]) -> Vec<f64> {
    let noise = net.noise_power_w();
    let mut out = vec![f64::INFINITY; net.num_users()];
    for m in 0..net.num_bs() {
        for c in 0..net.num_channels() {
            let members = g.members(net, m, c);
            for &n in &members {
                for &i in &members {
                    let h = net.gain(m, c, i);
                    let interference: f64 = (0..net.num_bs())
                        .filter(|&m2| m2 != m)
                        .map(|m2| net.gain(m2, c, i) * group_power[m2][c])
                        .sum();
                    // i decodes n when n is no weaker than i
                    let s_i = h / (interference + noise);
                    let interference_n: f64 = (0..net.num_bs())
                        .filter(|&m2| m2 != m)
                        .map(|m2| net.gain(m2, c, n) * group_power[m2][c])
                        .sum();
                    let s_n = net.gain(m, c, n) / (interference_n + noise);
                    if (s_i, i) < (s_n, n) {
                        continue;
                    }
                    let residual: f64 = members
                        .iter()
                        .filter(|&&j| {
                            let inter_j: f64 = (0..net.num_bs())
                                .filter(|&m2| m2 != m)
                                .map(|m2| net.gain(m2, c, j) * group_power[m2][c])
                                .sum();
                            let s_j = net.gain(m, c, j) / (inter_j + noise);
                            (s_j, j) > (s_n, n)
                        })
                        .map(|&j| p[j])
                        .sum();
                    let sinr = h * p[n] / (h * residual + interference + noise);
                    out[n] = out[n].min(net.bandwidth_hz() * (1.0 + sinr).log2());
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ascending_ccinr_beats_every_order((s, r) in group()) {
        let members: Vec<usize> = (0..s.len()).collect();
        let best = group_power_closed_form(&members, &s, &r);
        for perm in permutations(&members) {
            let other: f64 = recursion(&perm, &s, &r).iter().sum();
            prop_assert!(best <= other * (1.0 + 1e-9));
        }
    }

    #[test]
    fn closed_form_is_sum_of_recursion((s, r) in group()) {
        let members: Vec<usize> = (0..s.len()).collect();
        let order = sic_order(&members, &s);
        let oracle = recursion(&order, &s, &r);
        let total: f64 = oracle.iter().sum();
        prop_assert!((group_power_closed_form(&members, &s, &r) / total - 1.0).abs() <= 1e-12);
        prop_assert!((group_power_along(&order, &s, &r) / total - 1.0).abs() <= 1e-12);
        for (k, &n) in order.iter().enumerate() {
            prop_assert!((powers_along(&order, &s, &r)[k] / oracle[n] - 1.0).abs() <= 1e-12);
        }
        for (p, &n) in per_user_powers(&members, &s, &r).iter().zip(&members) {
            prop_assert!((p / oracle[n] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sic_order_sorts_by_ccinr(s in prop::collection::vec(prop::sample::select(vec![0.5, 1.0, 2.0, 3.0]), 1..8)) {
        let members: Vec<usize> = (0..s.len()).rev().collect();
        let order = sic_order(&members, &s);
        for w in order.windows(2) {
            prop_assert!(s[w[0]] < s[w[1]] || (s[w[0]] == s[w[1]] && w[0] < w[1]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasible_solutions_meet_every_target(
        seed in any::<u64>(),
        users in 4usize..24,
        picks in prop::collection::vec(0usize..64, 1..24),
    ) {
        let net = net(seed, 4, users, 6);
        let g = random_grouping(&net, &picks);
        let sol = solve_all_powers(&net, &g);
        prop_assume!(sol.feasible);
        let targets = &net.scenario().target_rates_bps;
        let oracle = rates_from_sinr(&net, &g, &sol.p, &sol.group_power);
        for (n, (&a, &t)) in achieved_rates(&net, &sol).iter().zip(targets).enumerate() {
            prop_assert!(a / t - 1.0 >= -1e-9, "user {n}: {a} < {t}");
            prop_assert!(oracle[n] / t - 1.0 >= -1e-9, "user {n}: oracle {} < {t}", oracle[n]);
            prop_assert!(sol.p[n] >= 0.0);
        }
        let grouped: f64 = sol.group_power.iter().flatten().sum();
        prop_assert!((grouped / sol.total_power().unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn raising_a_rate_never_lowers_power(
        seed in any::<u64>(),
        users in 4usize..20,
        picks in prop::collection::vec(0usize..64, 1..20),
        who in any::<prop::sample::Index>(),
        factor in 1.0f64..2.0,
    ) {
        let net = net(seed, 4, users, 6);
        let g = random_grouping(&net, &picks);
        let before = solve_all_powers(&net, &g);
        prop_assume!(before.feasible);
        let n = who.index(users);
        let raised = net.with_target_rate(n, net.scenario().target_rates_bps[n] * factor);
        let after = solve_all_powers(&raised, &g).total_power_or_inf();
        prop_assert!(after >= before.total_power().unwrap() * (1.0 - 1e-12));
    }

    #[test]
    fn empty_groups_carry_no_power(seed in any::<u64>(), users in 1usize..12) {
        let net = net(seed, 4, users, 12);
        let g = random_grouping(&net, &[0, 1]);
        let sol = solve_all_powers(&net, &g);
        for m in 0..4 {
            for c in 2..12 {
                prop_assert_eq!(sol.group_power[m][c], 0.0);
            }
        }
    }

    #[test]
    fn single_cell_needs_no_coupling(seed in any::<u64>(), users in 1usize..30, picks in prop::collection::vec(0usize..64, 1..30)) {
        let net = net(seed, 1, users, 5);
        let g = random_grouping(&net, &picks);
        let sol = solve_all_powers(&net, &g);
        prop_assert!(sol.feasible);
        let noise = net.noise_power_w();
        let r = net.spectral_rates();
        for c in 0..5 {
            let members = g.members(&net, 0, c);
            let s: Vec<f64> = (0..users).map(|n| net.gain(0, c, n) / noise).collect();
            let want: f64 = recursion(&sic_order(&members, &s), &s, r).iter().sum();
            let got = sol.group_power[0][c];
            prop_assert!(got == want || (got / want - 1.0).abs() <= 1e-12);
        }
    }
}
