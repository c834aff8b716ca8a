//! Power allocation for a fixed grouping.
//!
//! Users on one subchannel of one BS form a NOMA group. Within a group users are
//! decoded in ascending CCINR order (`|H|^2 / (I + noise)`), and the minimum
//! power meeting every target follows a back-to-front recursion. Co-channel
//! groups of different BSs interfere, so the group powers on a channel solve a
//! small `M x M` linear system whose coefficients depend on the decode order,
//! which itself depends on the interference. [`solve_channel`] resolves that
//! loop by iterating order -> system -> solve until the order is stable.
//!
//! Channels are orthogonal, so every channel is solved independently and the
//! total power is the sum of per-channel totals.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::scenario::Network;

/// Iteration cap for the order/solve fixed point on one channel.
pub const MAX_FIXED_POINT_ITERATIONS: usize = 100;

/// Relative tolerance used for every power comparison.
pub const REL_TOL: f64 = 1e-9;

/// Absolute floor (watts) under [`REL_TOL`].
pub const ABS_FLOOR_W: f64 = 1e-18;

/// Smallest decrease of `total_w` that counts as an improvement.
pub fn improvement_tolerance(total_w: f64) -> f64 {
    if total_w.is_finite() {
        (REL_TOL * total_w.abs()).max(ABS_FLOOR_W)
    } else {
        ABS_FLOOR_W
    }
}

/// Channel assignment of every user. The BS of each user is fixed by association.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grouping {
    channel_of: Vec<usize>,
    bs_of: Vec<usize>,
}

impl Grouping {
    pub fn new(net: &Network, channel_of: Vec<usize>) -> Result<Self> {
        if channel_of.len() != net.num_users() {
            return Err(invalid(format!(
                "grouping has {} entries for {} users",
                channel_of.len(),
                net.num_users()
            )));
        }
        if let Some(&g) = channel_of.iter().find(|&&g| g >= net.num_channels()) {
            return Err(invalid(format!("channel {g} out of range")));
        }
        Ok(Self {
            channel_of,
            bs_of: net.scenario().association.clone(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.channel_of.len()
    }

    #[inline]
    pub fn channel_of(&self, user: usize) -> usize {
        self.channel_of[user]
    }

    #[inline]
    pub fn bs_of(&self, user: usize) -> usize {
        self.bs_of[user]
    }

    pub fn channels(&self) -> &[usize] {
        &self.channel_of
    }

    /// Members of group `(bs, channel)`, ascending id.
    pub fn members(&self, net: &Network, bs: usize, channel: usize) -> Vec<usize> {
        net.users_of_bs(bs)
            .iter()
            .copied()
            .filter(|&n| self.channel_of[n] == channel)
            .collect()
    }

    /// Members of every BS on `channel`, indexed by BS.
    pub fn channel_members(&self, net: &Network, channel: usize) -> Vec<Vec<usize>> {
        (0..net.num_bs())
            .map(|m| self.members(net, m, channel))
            .collect()
    }

    pub(crate) fn set_channel(&mut self, user: usize, channel: usize) {
        self.channel_of[user] = channel;
    }
}

/// How users inside a group are ordered for SIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeOrder {
    /// Ascending CCINR. Optimal.
    #[default]
    Ccinr,
    /// Ascending own-BS channel gain, ignoring interference.
    ChannelGain,
    /// Descending target rate.
    RateDescending,
}

/// Per-user CCINR `s` (1/W) and inter-cell interference `I` (W).
#[derive(Debug, Clone, PartialEq)]
pub struct CcinrTable {
    pub s: Vec<f64>,
    pub interference: Vec<f64>,
}

/// Interference and CCINR of every user given the group power table `[bs][channel]`.
pub fn ccinr(net: &Network, grouping: &Grouping, group_power: &[Vec<f64>]) -> CcinrTable {
    let noise = net.noise_power_w();
    let (s, interference) = (0..net.num_users())
        .map(|n| {
            let (m, g) = (grouping.bs_of(n), grouping.channel_of(n));
            let i_n = interference_at(net, g, m, n, |m2| group_power[m2][g]);
            (net.gain(m, g, n) / (i_n + noise), i_n)
        })
        .unzip();
    CcinrTable { s, interference }
}

#[inline]
fn interference_at(
    net: &Network,
    channel: usize,
    bs: usize,
    user: usize,
    group_power: impl Fn(usize) -> f64,
) -> f64 {
    (0..net.num_bs())
        .filter(|&m2| m2 != bs)
        .map(|m2| net.gain(m2, channel, user) * group_power(m2))
        .sum()
}

/// Decode order of a group: ascending `s`, ties by ascending user id.
/// `s` is indexed by user id.
pub fn sic_order(members: &[usize], s: &[f64]) -> Vec<usize> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    order
}

/// Group power `sum_n (2^r_n - 1)/s_n * prod_{i decoded before n} 2^r_i`
/// along an explicit decode order.
pub fn group_power_along(order: &[usize], s: &[f64], spectral_rates: &[f64]) -> f64 {
    let mut product = 1.0;
    let mut total = 0.0;
    for &n in order {
        let x = spectral_rates[n].exp2();
        total += (x - 1.0) / s[n] * product;
        product *= x;
    }
    total
}

/// Closed-form minimum power of a group under the CCINR decode order.
pub fn group_power_closed_form(members: &[usize], s: &[f64], spectral_rates: &[f64]) -> f64 {
    group_power_along(&sic_order(members, s), s, spectral_rates)
}

/// Per-user powers along a decode order, aligned with `order`. The last
/// decoded user is served first: `p_n = (2^r_n - 1)(1/s_n + sum of later p)`.
pub fn powers_along(order: &[usize], s: &[f64], spectral_rates: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; order.len()];
    let mut later = 0.0;
    for (k, &n) in order.iter().enumerate().rev() {
        p[k] = (spectral_rates[n].exp2() - 1.0) * (1.0 / s[n] + later);
        later += p[k];
    }
    p
}

/// Minimum per-user powers under the CCINR decode order, aligned with `members`.
pub fn per_user_powers(members: &[usize], s: &[f64], spectral_rates: &[f64]) -> Vec<f64> {
    let order = sic_order(members, s);
    let p = powers_along(&order, s, spectral_rates);
    members
        .iter()
        .map(|n| p[order.iter().position(|o| o == n).expect("member in order")])
        .collect()
}

/// `A P = b` for the group powers of all BSs on one channel.
/// `a` is row-major `M x M` with `-1` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSystem {
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ChannelSystem {
    #[inline]
    pub fn a(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.dim + col]
    }
}

/// Builds the channel system from per-BS decode orders.
pub fn system_from_orders(net: &Network, channel: usize, orders: &[Vec<usize>]) -> ChannelSystem {
    let dim = net.num_bs();
    let noise = net.noise_power_w();
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for (m, order) in orders.iter().enumerate() {
        a[m * dim + m] = -1.0;
        let mut product = 1.0;
        for &n in order {
            let x = net.spectral_rate(n).exp2();
            let weight = (x - 1.0) * product / net.gain(m, channel, n);
            product *= x;
            b[m] -= weight * noise;
            for m2 in (0..dim).filter(|&m2| m2 != m) {
                a[m * dim + m2] += weight * net.gain(m2, channel, n);
            }
        }
    }
    ChannelSystem { dim, a, b }
}

/// Channel system for `channel` under `grouping`, ordering each group by the
/// given CCINR table.
pub fn build_channel_system(
    net: &Network,
    grouping: &Grouping,
    table: &CcinrTable,
    channel: usize,
) -> ChannelSystem {
    let orders: Vec<Vec<usize>> = grouping
        .channel_members(net, channel)
        .iter()
        .map(|members| sic_order(members, &table.s))
        .collect();
    system_from_orders(net, channel, &orders)
}

/// Solves `A P = b` by LU with partial pivoting. `None` when the matrix is
/// numerically singular or the solution has a negative or non-finite entry.
pub fn solve_channel_powers(system: &ChannelSystem) -> Option<Vec<f64>> {
    let dim = system.dim;
    // rows reading `-P_m = 0` (empty or zero-rate groups) are exactly zero
    let active: Vec<usize> = (0..dim)
        .filter(|&r| system.b[r] != 0.0 || (0..dim).any(|c| c != r && system.a(r, c) != 0.0))
        .collect();
    let mut out = vec![0.0; dim];
    let k = active.len();
    if k == 0 {
        return Some(out);
    }
    let a = DMatrix::from_fn(k, k, |i, j| system.a(active[i], active[j]));
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let lu = a.lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(min_pivot > 1e-13 * scale) {
        return None;
    }
    let x = lu.solve(&DVector::from_iterator(k, active.iter().map(|&r| system.b[r])))?;
    let peak = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for (&r, &v) in active.iter().zip(x.iter()) {
        if !v.is_finite() || v < -1e-12 * peak {
            return None;
        }
        out[r] = v.max(0.0);
    }
    Some(out)
}

/// Spectral radius of the off-diagonal coupling `A + I`. The system has a
/// nonnegative solution exactly when this is below one.
pub fn coupling_spectral_radius(system: &ChannelSystem) -> f64 {
    let dim = system.dim;
    if dim == 0 {
        return 0.0;
    }
    let mut f = DMatrix::from_row_slice(dim, dim, &system.a);
    for i in 0..dim {
        f[(i, i)] = 0.0;
    }
    if f.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    f.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Converged powers of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPowers {
    /// Group power per BS, watts.
    pub group_power: Vec<f64>,
    /// Decode order per BS.
    pub orders: Vec<Vec<usize>>,
    pub iterations: usize,
    pub feasible: bool,
    /// Zero when feasible, otherwise the coupling spectral radius at the
    /// failing orders (at least one).
    pub infeasibility: f64,
}

impl ChannelPowers {
    /// Sum over BSs, `+inf` when infeasible.
    pub fn total(&self) -> f64 {
        if self.feasible {
            self.group_power.iter().sum()
        } else {
            f64::INFINITY
        }
    }
}

fn order_group(
    net: &Network,
    channel: usize,
    bs: usize,
    members: &[usize],
    group_power: &[f64],
    rule: DecodeOrder,
) -> Vec<usize> {
    let mut order = members.to_vec();
    match rule {
        DecodeOrder::Ccinr => {
            let noise = net.noise_power_w();
            let mut keyed: Vec<(f64, usize)> = members
                .iter()
                .map(|&n| {
                    let i_n = interference_at(net, channel, bs, n, |m2| group_power[m2]);
                    (net.gain(bs, channel, n) / (i_n + noise), n)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order = keyed.into_iter().map(|(_, n)| n).collect();
        }
        DecodeOrder::ChannelGain => order.sort_by(|&a, &b| {
            net.gain(bs, channel, a)
                .total_cmp(&net.gain(bs, channel, b))
                .then(a.cmp(&b))
        }),
        DecodeOrder::RateDescending => order.sort_by(|&a, &b| {
            net.spectral_rate(b)
                .total_cmp(&net.spectral_rate(a))
                .then(a.cmp(&b))
        }),
    }
    order
}

/// Fixed point of decode order and coupled group powers on one channel.
///
/// Starts from zero group powers. Each pass orders every group, builds and
/// solves the channel system. Since the system depends only on the orders,
/// the loop has converged as soon as a pass reproduces the previous orders.
pub fn solve_channel(
    net: &Network,
    channel: usize,
    members: &[Vec<usize>],
    rule: DecodeOrder,
) -> ChannelPowers {
    let dim = net.num_bs();
    let mut group_power = vec![0.0; dim];
    let mut previous: Option<Vec<Vec<usize>>> = None;
    for iteration in 1..=MAX_FIXED_POINT_ITERATIONS {
        let orders: Vec<Vec<usize>> = members
            .iter()
            .enumerate()
            .map(|(m, group)| order_group(net, channel, m, group, &group_power, rule))
            .collect();
        if previous.as_ref() == Some(&orders) {
            return ChannelPowers {
                group_power,
                orders,
                iterations: iteration,
                feasible: true,
                infeasibility: 0.0,
            };
        }
        let system = system_from_orders(net, channel, &orders);
        match solve_channel_powers(&system) {
            Some(p) => group_power = p,
            None => {
                return ChannelPowers {
                    group_power,
                    orders,
                    iterations: iteration,
                    feasible: false,
                    infeasibility: coupling_spectral_radius(&system).max(1.0),
                }
            }
        }
        previous = Some(orders);
    }
    let orders = previous.unwrap_or_default();
    let radius = coupling_spectral_radius(&system_from_orders(net, channel, &orders));
    ChannelPowers {
        group_power,
        orders,
        iterations: MAX_FIXED_POINT_ITERATIONS,
        feasible: false,
        infeasibility: radius.max(1.0),
    }
}

/// Total power of one channel for the given per-BS membership, `+inf` if infeasible.
pub fn channel_power(net: &Network, channel: usize, members: &[Vec<usize>]) -> f64 {
    if members.iter().all(|m| m.is_empty()) {
        return 0.0;
    }
    solve_channel(net, channel, members, DecodeOrder::Ccinr).total()
}

/// Powers of every user for a grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    /// Per-user power, watts.
    pub p: Vec<f64>,
    /// Group power `[bs][channel]`, watts.
    pub group_power: Vec<Vec<f64>>,
    pub ccinr: CcinrTable,
    /// Decode order `[bs][channel]`, first decoded first.
    pub sic_order: Vec<Vec<Vec<usize>>>,
    pub feasible: bool,
    /// Feasibility of each channel's coupled solve.
    pub channel_feasible: Vec<bool>,
    /// See [`ChannelPowers::infeasibility`].
    pub channel_infeasibility: Vec<f64>,
    /// Largest fixed-point pass count over channels.
    pub fixed_point_iterations: usize,
}

impl PowerSolution {
    /// Sum of user powers, `None` when infeasible.
    pub fn total_power(&self) -> Option<f64> {
        self.feasible.then(|| self.p.iter().sum())
    }

    /// Like [`Self::total_power`] with infeasible mapped to `+inf`.
    pub fn total_power_or_inf(&self) -> f64 {
        self.total_power().unwrap_or(f64::INFINITY)
    }

    /// Per-channel totals `sum_m P[m][g]`.
    pub fn channel_totals(&self) -> Vec<f64> {
        let channels = self.group_power.first().map_or(0, Vec::len);
        (0..channels)
            .map(|g| self.group_power.iter().map(|row| row[g]).sum())
            .collect()
    }

    /// Sum of [`ChannelPowers::infeasibility`] over channels; zero iff feasible.
    pub fn infeasibility(&self) -> f64 {
        self.channel_infeasibility.iter().sum()
    }

    /// Total power of the feasible channels only.
    pub fn feasible_power(&self) -> f64 {
        self.channel_totals()
            .iter()
            .zip(&self.channel_feasible)
            .filter(|(_, ok)| **ok)
            .map(|(w, _)| w)
            .sum()
    }

    /// Mean inter-cell interference over users, watts.
    pub fn mean_interference(&self) -> f64 {
        let i = &self.ccinr.interference;
        if i.is_empty() {
            0.0
        } else {
            i.iter().sum::<f64>() / i.len() as f64
        }
    }
}

/// Total transmit power, `None` if infeasible.
pub fn total_power(solution: &PowerSolution) -> Option<f64> {
    solution.total_power()
}

/// Minimum-power allocation for `grouping` under the CCINR decode order.
pub fn solve_all_powers(net: &Network, grouping: &Grouping) -> PowerSolution {
    solve_all_powers_with(net, grouping, DecodeOrder::Ccinr)
}

/// Same as [`solve_all_powers`] with a chosen decode-order rule.
pub fn solve_all_powers_with(net: &Network, grouping: &Grouping, rule: DecodeOrder) -> PowerSolution {
    let (num_bs, num_channels) = (net.num_bs(), net.num_channels());
    let mut group_power = vec![vec![0.0; num_channels]; num_bs];
    let mut sic = vec![vec![Vec::new(); num_channels]; num_bs];
    let mut channel_feasible = Vec::with_capacity(num_channels);
    let mut channel_infeasibility = Vec::with_capacity(num_channels);
    let mut iterations = 0;
    for g in 0..num_channels {
        let members = grouping.channel_members(net, g);
        let solved = solve_channel(net, g, &members, rule);
        channel_feasible.push(solved.feasible);
        channel_infeasibility.push(solved.infeasibility);
        iterations = iterations.max(solved.iterations);
        for (m, order) in solved.orders.into_iter().enumerate() {
            group_power[m][g] = solved.group_power[m];
            sic[m][g] = order;
        }
    }

    let table = ccinr(net, grouping, &group_power);
    let mut p = vec![0.0; net.num_users()];
    for orders in &sic {
        for order in orders {
            for (&n, pn) in order
                .iter()
                .zip(powers_along(order, &table.s, net.spectral_rates()))
            {
                p[n] = pn;
            }
        }
    }
    PowerSolution {
        p,
        group_power,
        ccinr: table,
        sic_order: sic,
        feasible: channel_feasible.iter().all(|&f| f),
        channel_feasible,
        channel_infeasibility,
        fixed_point_iterations: iterations,
    }
}

/// Achieved rate of every user, bit/s: the minimum over the user itself and
/// every later decoder in its group of the SINR at which they decode it.
pub fn achieved_rates(net: &Network, solution: &PowerSolution) -> Vec<f64> {
    let noise = net.noise_power_w();
    let bandwidth = net.bandwidth_hz();
    let mut rates = vec![0.0; net.num_users()];
    for (m, orders) in solution.sic_order.iter().enumerate() {
        for (g, order) in orders.iter().enumerate() {
            for (k, &n) in order.iter().enumerate() {
                let residual: f64 = order[k + 1..].iter().map(|&j| solution.p[j]).sum();
                let worst = order[k..]
                    .iter()
                    .map(|&i| {
                        let h = net.gain(m, g, i);
                        h * solution.p[n] / (h * residual + solution.ccinr.interference[i] + noise)
                    })
                    .fold(f64::INFINITY, f64::min);
                rates[n] = bandwidth * worst.ln_1p() / std::f64::consts::LN_2;
            }
        }
    }
    rates
}
