//! League graph of one BS and negative differ-group cycle search.
//!
//! Nodes are the BS's users plus one zero-rate virtual user per channel. The
//! edge `i -> j` exists when `i` and `j` sit in different groups; its weight is
//! the change in total power of `j`'s channel (all BSs) when `i` joins that
//! channel and `j` leaves it, every other channel held fixed. Along a cycle
//! whose nodes are in pairwise different groups each channel changes exactly
//! once, so the cycle weight is the total-power change of rotating every user
//! into the next node's group. Virtual nodes move nobody, which turns a
//! rotation into a chain of shifts.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::power::{improvement_tolerance, solve_channel, DecodeOrder, Grouping};
use crate::scenario::Network;

/// Cap on label extensions per EBA search.
pub const EBA_BUDGET: usize = 1_000_000;

/// Smallest relative drop in infeasibility that counts as progress.
pub const REPAIR_REL_TOL: f64 = 1e-9;

/// Default FGA budget factor.
pub const DEFAULT_ALPHA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    /// A user, by global id.
    Real(usize),
    /// The zero-rate placeholder of a channel.
    Virtual(usize),
}

impl Node {
    pub fn is_virtual(&self) -> bool {
        matches!(self, Node::Virtual(_))
    }

    fn channel(&self, grouping: &Grouping) -> usize {
        match *self {
            Node::Real(n) => grouping.channel_of(n),
            Node::Virtual(g) => g,
        }
    }

    fn label(&self) -> String {
        match self {
            Node::Real(n) => format!("u{n}"),
            Node::Virtual(g) => format!("v{g}"),
        }
    }
}

/// What the edge weights of a league graph measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphMode {
    /// Change of channel power. Entering infeasibility is never an edge,
    /// leaving it is `-inf`.
    #[default]
    Power,
    /// Change of channel infeasibility (coupling spectral radius of infeasible
    /// channels, zero for feasible ones). Entering infeasibility is never an
    /// edge. Used to make partial progress out of an infeasible grouping.
    Repair,
}

/// Cost of one channel under `mode`: power (`+inf` if infeasible) or infeasibility.
fn channel_cost(net: &Network, channel: usize, members: &[Vec<usize>], mode: GraphMode) -> f64 {
    if members.iter().all(|m| m.is_empty()) {
        return 0.0;
    }
    let solved = solve_channel(net, channel, members, DecodeOrder::Ccinr);
    match mode {
        GraphMode::Power => solved.total(),
        GraphMode::Repair => solved.infeasibility,
    }
}

fn cost_delta(mode: GraphMode, before: f64, after: f64) -> f64 {
    match mode {
        GraphMode::Power => match (before.is_finite(), after.is_finite()) {
            (true, true) => after - before,
            (_, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
        },
        GraphMode::Repair if before == 0.0 && after > 0.0 => f64::INFINITY,
        GraphMode::Repair => after - before,
    }
}

fn moved_membership(
    members: &[Vec<usize>],
    bs: usize,
    incoming: Node,
    outgoing: Node,
) -> Vec<Vec<usize>> {
    let mut out = members.to_vec();
    let group = &mut out[bs];
    if let Node::Real(n) = outgoing {
        group.retain(|&u| u != n);
    }
    if let Node::Real(n) = incoming {
        group.push(n);
        group.sort_unstable();
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn weight_between(
    net: &Network,
    grouping: &Grouping,
    bs: usize,
    from: Node,
    to: Node,
    members: &[Vec<Vec<usize>>],
    base: &[f64],
    mode: GraphMode,
) -> f64 {
    let (g_from, g_to) = (from.channel(grouping), to.channel(grouping));
    if g_from == g_to {
        return f64::INFINITY;
    }
    if from.is_virtual() && to.is_virtual() {
        return 0.0;
    }
    let after = channel_cost(net, g_to, &moved_membership(&members[g_to], bs, from, to), mode);
    cost_delta(mode, base[g_to], after)
}

fn check_node(net: &Network, bs: usize, node: Node) -> Result<()> {
    match node {
        Node::Real(n) if n >= net.num_users() || net.bs_of(n) != bs => {
            Err(invalid(format!("user {n} is not served by BS {bs}")))
        }
        Node::Virtual(g) if g >= net.num_channels() => Err(invalid(format!("no channel {g}"))),
        _ => Ok(()),
    }
}

/// Weight of the edge `from -> to` in the graph of `bs`: the change of the
/// total power on `to`'s channel when `from` joins it and `to` leaves it.
/// `+inf` when both are in the same group or the moved state is infeasible.
pub fn edge_weight(net: &Network, grouping: &Grouping, bs: usize, from: Node, to: Node) -> Result<f64> {
    check_node(net, bs, from)?;
    check_node(net, bs, to)?;
    let g_to = to.channel(grouping);
    let mut members = vec![Vec::new(); net.num_channels()];
    members[g_to] = grouping.channel_members(net, g_to);
    let mut base = vec![f64::NAN; net.num_channels()];
    base[g_to] = channel_cost(net, g_to, &members[g_to], GraphMode::Power);
    Ok(weight_between(net, grouping, bs, from, to, &members, &base, GraphMode::Power))
}

/// Weighted digraph over the users and virtual users of one BS.
#[derive(Debug, Clone)]
pub struct LeagueGraph {
    bs: usize,
    nodes: Vec<Node>,
    group_of: Vec<usize>,
    num_groups: usize,
    adjacency: Vec<f64>,
    base_total: f64,
    mode: GraphMode,
}

/// Builds the power league graph of `bs` against `grouping`.
pub fn build_graph(net: &Network, grouping: &Grouping, bs: usize) -> LeagueGraph {
    build_graph_with(net, grouping, bs, GraphMode::Power)
}

pub fn build_graph_with(net: &Network, grouping: &Grouping, bs: usize, mode: GraphMode) -> LeagueGraph {
    let num_groups = net.num_channels();
    let members: Vec<Vec<Vec<usize>>> = (0..num_groups)
        .map(|g| grouping.channel_members(net, g))
        .collect();
    let base: Vec<f64> = members
        .iter()
        .enumerate()
        .map(|(g, m)| channel_cost(net, g, m, mode))
        .collect();

    let nodes: Vec<Node> = net
        .users_of_bs(bs)
        .iter()
        .map(|&n| Node::Real(n))
        .chain((0..num_groups).map(Node::Virtual))
        .collect();
    let group_of: Vec<usize> = nodes.iter().map(|v| v.channel(grouping)).collect();
    let len = nodes.len();
    let mut adjacency = vec![f64::INFINITY; len * len];
    for i in 0..len {
        for j in 0..len {
            if group_of[i] != group_of[j] {
                adjacency[i * len + j] =
                    weight_between(net, grouping, bs, nodes[i], nodes[j], &members, &base, mode);
            }
        }
    }
    LeagueGraph {
        bs,
        nodes,
        group_of,
        num_groups,
        adjacency,
        base_total: base.iter().sum(),
        mode,
    }
}

impl LeagueGraph {
    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn group_of(&self, index: usize) -> usize {
        self.group_of[index]
    }

    /// Edge weight by node index; `+inf` means no edge.
    #[inline]
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.adjacency[from * self.nodes.len() + to]
    }

    pub fn index_of(&self, node: Node) -> Option<usize> {
        self.nodes.iter().position(|&v| v == node)
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    /// Total power (`+inf` if infeasible) or total infeasibility of the
    /// grouping the graph was built from, depending on the mode.
    pub fn base_total(&self) -> f64 {
        self.base_total
    }

    /// Sum of edge weights around a cycle of node indices.
    pub fn cycle_weight(&self, cycle: &[usize]) -> f64 {
        (0..cycle.len())
            .map(|k| self.weight(cycle[k], cycle[(k + 1) % cycle.len()]))
            .sum()
    }

    fn tolerance(&self) -> f64 {
        match self.mode {
            GraphMode::Power => improvement_tolerance(self.base_total),
            GraphMode::Repair => REPAIR_REL_TOL * self.base_total.max(1.0),
        }
    }

    fn league(&self, cycle: &[usize], predicted_delta: f64) -> League {
        let nodes: Vec<Node> = cycle.iter().map(|&i| self.nodes[i]).collect();
        let kind = if nodes.iter().any(Node::is_virtual) {
            LeagueKind::Shift
        } else {
            LeagueKind::Exchange
        };
        League {
            bs: self.bs,
            kind,
            groups: cycle.iter().map(|&i| self.group_of[i]).collect(),
            cycle: nodes,
            predicted_delta,
        }
    }

    /// Writes every finite edge as `from,to,group_from,group_to,weight_w`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["from", "to", "group_from", "group_to", "weight_w"])?;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let w = self.weight(i, j);
                if w != f64::INFINITY {
                    out.write_record([
                        self.nodes[i].label(),
                        self.nodes[j].label(),
                        self.group_of[i].to_string(),
                        self.group_of[j].to_string(),
                        format!("{w:e}"),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeagueKind {
    /// A chain of moves; the cycle passes through at least one virtual user.
    Shift,
    /// A cyclic swap among real users.
    Exchange,
}

/// An improving rotation: every node moves into the group of its successor.
#[derive(Debug, Clone, PartialEq)]
pub struct League {
    pub bs: usize,
    pub kind: LeagueKind,
    pub cycle: Vec<Node>,
    /// Group of each cycle node when the league was found.
    pub groups: Vec<usize>,
    /// Cycle weight: watts, or infeasibility for a repair graph.
    pub predicted_delta: f64,
}

impl League {
    /// `(user, target channel)` for every real user on the cycle.
    pub fn moves(&self) -> Vec<(usize, usize)> {
        let len = self.cycle.len();
        self.cycle
            .iter()
            .enumerate()
            .filter_map(|(k, v)| match *v {
                Node::Real(n) => Some((n, self.groups[(k + 1) % len])),
                Node::Virtual(_) => None,
            })
            .collect()
    }
}

/// Applies the rotation of `league` to `grouping`.
pub fn apply_league(grouping: &Grouping, league: &League) -> Result<Grouping> {
    for (node, &g) in league.cycle.iter().zip(&league.groups) {
        if let Node::Real(n) = *node {
            if n >= grouping.num_users() || grouping.channel_of(n) != g || grouping.bs_of(n) != league.bs {
                return Err(Error::StaleLeague {
                    user: n,
                    expected_channel: g,
                });
            }
        }
    }
    let mut out = grouping.clone();
    for (n, g) in league.moves() {
        out.set_channel(n, g);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Label {
    node: u32,
    start: u32,
    mask: u64,
    dist: f64,
    parent: u32,
}

const NO_PARENT: u32 = u32::MAX;

/// Extended Bellman-Ford search for a negative differ-group loop.
pub fn find_negative_loop_eba(graph: &LeagueGraph) -> Result<Option<League>> {
    find_negative_loop_eba_with_budget(graph, EBA_BUDGET)
}

/// Label-correcting shortest paths from a super node joined to every node by a
/// zero-weight edge. A label is a path that never revisits a group; it is only
/// extended while its length stays strictly negative, since every negative
/// cycle has a rotation whose proper prefixes are all negative. Labels are
/// keyed by `(first node, last node, groups used)` and a key keeps only its
/// shortest path, so the search is exact: the most negative loop is returned.
pub fn find_negative_loop_eba_with_budget(graph: &LeagueGraph, budget: usize) -> Result<Option<League>> {
    if graph.num_groups > 64 {
        return Err(invalid("EBA supports at most 64 groups"));
    }
    let len = graph.len();
    let tol = graph.tolerance();
    let bit = |i: usize| 1u64 << graph.group_of[i];

    let mut labels: Vec<Label> = Vec::with_capacity(len);
    let mut best: HashMap<(u32, u32, u64), f64> = HashMap::new();
    let mut queue = VecDeque::with_capacity(len);
    for i in 0..len {
        labels.push(Label {
            node: i as u32,
            start: i as u32,
            mask: bit(i),
            dist: 0.0,
            parent: NO_PARENT,
        });
        queue.push_back(i);
    }

    let mut extensions = 0usize;
    let mut best_loop: Option<(f64, usize)> = None;
    while let Some(li) = queue.pop_front() {
        let label = labels[li];
        let (node, start) = (label.node as usize, label.start as usize);
        if label.parent != NO_PARENT && best[&(label.start, label.node, label.mask)] < label.dist {
            continue;
        }
        for j in 0..len {
            let w = graph.weight(node, j);
            if w == f64::INFINITY {
                continue;
            }
            let dist = label.dist + w;
            if j == start {
                if dist < -tol && best_loop.is_none_or(|(d, _)| dist < d) {
                    best_loop = Some((dist, li));
                }
                continue;
            }
            if label.mask & bit(j) != 0 || !(dist < 0.0) {
                continue;
            }
            let key = (label.start, j as u32, label.mask | bit(j));
            if best.get(&key).is_some_and(|&d| d <= dist) {
                continue;
            }
            extensions += 1;
            if extensions > budget {
                return Err(Error::BudgetExhausted(budget));
            }
            best.insert(key, dist);
            labels.push(Label {
                node: j as u32,
                start: label.start,
                mask: key.2,
                dist,
                parent: li as u32,
            });
            queue.push_back(labels.len() - 1);
        }
    }
    Ok(best_loop.map(|(dist, li)| graph.league(&trace_path(&labels, li), dist)))
}

fn trace_path(labels: &[Label], mut at: usize) -> Vec<usize> {
    let mut path = Vec::new();
    loop {
        path.push(labels[at].node as usize);
        if labels[at].parent == NO_PARENT {
            break;
        }
        at = labels[at].parent as usize;
    }
    path.reverse();
    path
}

/// Number of greedy restarts for budget factor `alpha` on `graph`.
pub fn fga_rounds(graph: &LeagueGraph, alpha: f64) -> usize {
    let rounds = (alpha * graph.len() as f64).ceil();
    if rounds.is_finite() && rounds >= 1.0 {
        rounds as usize
    } else {
        1
    }
}

/// Fast greedy search. Returns the most negative loop it sees.
pub fn find_negative_loop_fga(graph: &LeagueGraph, alpha: f64) -> Option<League> {
    fga_candidates(graph, alpha).into_iter().next()
}

/// Every distinct negative loop seen by the greedy search, most negative first.
///
/// Each round seeds a path with the smallest edge not yet used as a seed, then
/// repeatedly follows the cheapest edge from the path's tail into a group the
/// path has not visited, testing the closing edge back to the seed after every
/// step.
pub fn fga_candidates(graph: &LeagueGraph, alpha: f64) -> Vec<League> {
    let len = graph.len();
    let tol = graph.tolerance();
    let mut seeds = graph.adjacency.clone();
    let mut found: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();

    let mut consider = |path: &[usize], sum: f64, found: &mut Vec<(f64, Vec<usize>)>| {
        if sum < -tol && seen.insert(canonical_rotation(path)) {
            found.push((sum, path.to_vec()));
        }
    };

    for _ in 0..fga_rounds(graph, alpha) {
        let Some((seed, _)) = seeds
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != f64::INFINITY)
            .min_by(|a, b| a.1.total_cmp(b.1))
        else {
            break;
        };
        seeds[seed] = f64::INFINITY;
        let (first, second) = (seed / len, seed % len);

        let mut path = vec![first, second];
        let mut mask = (1u64 << graph.group_of[first]) | (1u64 << graph.group_of[second]);
        let mut length = graph.weight(first, second);
        let close = graph.weight(second, first);
        if close != f64::INFINITY {
            consider(&path, length + close, &mut found);
        }
        let mut tail = second;
        while path.len() < graph.num_groups {
            let next = (0..len)
                .filter(|&j| mask & (1u64 << graph.group_of[j]) == 0)
                .filter(|&j| graph.weight(tail, j) != f64::INFINITY)
                .min_by(|&a, &b| graph.weight(tail, a).total_cmp(&graph.weight(tail, b)));
            let Some(next) = next else { break };
            length += graph.weight(tail, next);
            path.push(next);
            mask |= 1u64 << graph.group_of[next];
            let close = graph.weight(next, first);
            if close != f64::INFINITY {
                consider(&path, length + close, &mut found);
            }
            tail = next;
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found
        .into_iter()
        .map(|(sum, path)| graph.league(&path, sum))
        .collect()
}

/// Rotation starting at the smallest index, for de-duplication.
fn canonical_rotation(cycle: &[usize]) -> Vec<usize> {
    let k = (0..cycle.len()).min_by_key(|&i| cycle[i]).unwrap_or(0);
    cycle[k..].iter().chain(&cycle[..k]).copied().collect()
}
