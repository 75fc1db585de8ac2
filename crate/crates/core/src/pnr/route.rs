//! PathFinder negotiated-congestion routing over the routing-resource graph.
//!
//! Nodes are (channel segment, track) pairs. Edges are switch-box
//! connections; with a disjoint switch box a net never changes track.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Driver, IoBinding, Netlist, Placement, PnrError, Sink};
use crate::arch::{Coord, FabricArch, Pin, SWITCH_PAIRS};

pub const MAX_ITERATIONS: usize = 50;
const PRESENT_START: f64 = 0.5;
const PRESENT_GROWTH: f64 = 1.5;
const HISTORY_STEP: f64 = 1.0;

/// Switch identifier: `(tile * W + track) * 6 + pair`.
pub type SwitchId = usize;

#[derive(Clone, Debug)]
pub struct RrGraph {
    pub width: usize,
    pub adjacency: Vec<Vec<(usize, SwitchId)>>,
}

impl RrGraph {
    pub fn new(arch: &FabricArch) -> Self {
        let w = arch.channel_width();
        let mut adjacency = vec![Vec::new(); arch.rr_node_count()];
        for at in arch.coords() {
            let tile = arch.cell_index(at);
            for track in 0..w {
                for (pair, &(s1, s2)) in SWITCH_PAIRS.iter().enumerate() {
                    let a = arch.rr_node(arch.sb_wire(at, s1), track);
                    let b = arch.rr_node(arch.sb_wire(at, s2), track);
                    let id = (tile * w + track) * 6 + pair;
                    adjacency[a].push((b, id));
                    adjacency[b].push((a, id));
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        RrGraph { width: w, adjacency }
    }

    pub fn decode_switch(&self, id: SwitchId) -> (usize, usize, usize) {
        let pair = id % 6;
        let rest = id / 6;
        (rest / self.width, rest % self.width, pair)
    }
}

/// Route of one net: a tree over routing nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTree {
    pub net: usize,
    /// Node driven by the net's source.
    pub source: usize,
    /// Nodes in insertion order, starting with `source`.
    pub nodes: Vec<usize>,
    /// `(parent, child, switch)` edges, parent first.
    pub edges: Vec<(usize, usize, SwitchId)>,
    /// Node reached for each sink, in the net's sink order.
    pub sinks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routing {
    pub trees: Vec<RouteTree>,
    pub iterations: usize,
    /// Router node expansions, a deterministic effort measure.
    pub expansions: u64,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then lowest node id.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Routing nodes a driver may use and each sink may be reached at.
pub(crate) struct Terminals {
    pub sources: Vec<usize>,
    pub sinks: Vec<Vec<usize>>,
    /// Fixed pad nodes owned by this net.
    pub pads: Vec<usize>,
}

pub(crate) fn terminals(
    netlist: &Netlist,
    placement: &Placement,
    arch: &FabricArch,
    io: &IoBinding,
) -> Vec<Terminals> {
    let w = arch.channel_width();
    let wire_nodes = |wire: usize| (0..w).map(|t| arch.rr_node(wire, t)).collect::<Vec<_>>();
    let pin_nodes = |at: Coord, pin: Pin| wire_nodes(arch.pin_wire(at, pin));
    netlist
        .nets
        .iter()
        .map(|net| {
            let mut pads = Vec::new();
            let sources = match net.driver {
                Driver::Node(i) => pin_nodes(placement.sites[i], Pin::Out),
                Driver::Source(k) => {
                    let pad = io.sources[k].1.expect("used source has a pad");
                    let node = arch.rr_node(pad.wire, pad.track);
                    pads.push(node);
                    vec![node]
                }
            };
            let sinks = net
                .sinks
                .iter()
                .map(|s| match *s {
                    Sink::Pin { node, pin } => pin_nodes(placement.sites[node], Pin::In(pin)),
                    Sink::Output(k) => {
                        let pad = io.outputs[k];
                        let node = arch.rr_node(pad.wire, pad.track);
                        pads.push(node);
                        vec![node]
                    }
                })
                .collect();
            Terminals { sources, sinks, pads }
        })
        .collect()
}

pub fn route(
    netlist: &Netlist,
    placement: &Placement,
    arch: &FabricArch,
    io: &IoBinding,
    seed: u64,
) -> Result<Routing, PnrError> {
    route_netlist(netlist, placement, arch, io, seed)
}

pub(super) fn route_netlist(
    netlist: &Netlist,
    placement: &Placement,
    arch: &FabricArch,
    io: &IoBinding,
    seed: u64,
) -> Result<Routing, PnrError> {
    let graph = RrGraph::new(arch);
    let terms = terminals(netlist, placement, arch, io);
    let n_nodes = arch.rr_node_count();
    let mut owner: Vec<Option<usize>> = vec![None; n_nodes];
    for (net, t) in terms.iter().enumerate() {
        for &p in &t.pads {
            owner[p] = Some(net);
        }
    }
    let mut order: Vec<usize> = (0..netlist.nets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut router = Router {
        graph: &graph,
        owner,
        occ: vec![0; n_nodes],
        hist: vec![0.0; n_nodes],
        present: PRESENT_START,
        dist: vec![f64::INFINITY; n_nodes],
        prev: vec![None; n_nodes],
        expansions: 0,
    };
    let mut trees: Vec<Option<RouteTree>> = vec![None; netlist.nets.len()];
    for iteration in 1..=MAX_ITERATIONS {
        for &net in &order {
            if let Some(old) = trees[net].take() {
                for &n in &old.nodes {
                    router.occ[n] -= 1;
                }
            }
            let Some(tree) = router.route_net(net, &terms[net]) else {
                return Err(PnrError::NoPath { net });
            };
            for &n in &tree.nodes {
                router.occ[n] += 1;
            }
            trees[net] = Some(tree);
        }
        let overused: Vec<usize> = (0..n_nodes).filter(|&n| router.occ[n] > 1).collect();
        if overused.is_empty() {
            return Ok(Routing {
                trees: trees.into_iter().map(Option::unwrap).collect(),
                iterations: iteration,
                expansions: router.expansions,
            });
        }
        if iteration == MAX_ITERATIONS {
            return Err(PnrError::Unroutable {
                iterations: iteration,
                overused: overused.len(),
            });
        }
        for n in overused {
            router.hist[n] += HISTORY_STEP;
        }
        router.present *= PRESENT_GROWTH;
    }
    unreachable!()
}

struct Router<'a> {
    graph: &'a RrGraph,
    owner: Vec<Option<usize>>,
    occ: Vec<u32>,
    hist: Vec<f64>,
    present: f64,
    dist: Vec<f64>,
    prev: Vec<Option<(usize, usize)>>,
    expansions: u64,
}

impl Router<'_> {
    fn node_cost(&self, net: usize, n: usize) -> Option<f64> {
        match self.owner[n] {
            Some(o) if o != net => None,
            _ => Some((1.0 + self.hist[n]) * (1.0 + self.present * self.occ[n] as f64)),
        }
    }

    fn route_net(&mut self, net: usize, t: &Terminals) -> Option<RouteTree> {
        let mut tree = RouteTree {
            net,
            source: usize::MAX,
            nodes: Vec::new(),
            edges: Vec::new(),
            sinks: Vec::with_capacity(t.sinks.len()),
        };
        let mut in_tree = BTreeSet::new();
        if t.sinks.is_empty() {
            // A dangling driver still occupies one node.
            let src = t
                .sources
                .iter()
                .copied()
                .filter_map(|s| self.node_cost(net, s).map(|c| (c, s)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, s)| s)
                .unwrap_or(t.sources[0]);
            tree.source = src;
            tree.nodes.push(src);
            return Some(tree);
        }
        for targets in &t.sinks {
            if let Some(&hit) = targets.iter().find(|n| in_tree.contains(*n)) {
                tree.sinks.push(hit);
                continue;
            }
            let mut touched = Vec::new();
            let mut heap = BinaryHeap::new();
            if tree.nodes.is_empty() {
                for &s in &t.sources {
                    if let Some(c) = self.node_cost(net, s) {
                        if c < self.dist[s] {
                            self.dist[s] = c;
                            self.prev[s] = None;
                            touched.push(s);
                            heap.push(Entry { cost: c, node: s });
                        }
                    }
                }
            } else {
                for &s in &tree.nodes {
                    self.dist[s] = 0.0;
                    self.prev[s] = None;
                    touched.push(s);
                    heap.push(Entry { cost: 0.0, node: s });
                }
            }
            let mut reached = None;
            while let Some(Entry { cost, node }) = heap.pop() {
                if cost > self.dist[node] {
                    continue;
                }
                self.expansions += 1;
                if targets.contains(&node) {
                    reached = Some(node);
                    break;
                }
                for &(nb, sw) in &self.graph.adjacency[node] {
                    let Some(c) = self.node_cost(net, nb) else { continue };
                    let nd = cost + c;
                    if nd < self.dist[nb] {
                        if self.dist[nb].is_infinite() {
                            touched.push(nb);
                        }
                        self.dist[nb] = nd;
                        self.prev[nb] = Some((node, sw));
                        heap.push(Entry { cost: nd, node: nb });
                    }
                }
            }
            let Some(end) = reached else {
                for n in touched {
                    self.dist[n] = f64::INFINITY;
                    self.prev[n] = None;
                }
                return None;
            };
            let mut path = vec![end];
            let mut cur = end;
            while let Some((p, _)) = self.prev[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            // `path[0]` is a tree node or, for the first sink, the source.
            if tree.nodes.is_empty() {
                tree.source = path[0];
                tree.nodes.push(path[0]);
                in_tree.insert(path[0]);
            }
            for win in path.windows(2) {
                let (parent, child) = (win[0], win[1]);
                let sw = self.prev[child].expect("path edge").1;
                if in_tree.insert(child) {
                    tree.nodes.push(child);
                    tree.edges.push((parent, child, sw));
                }
            }
            tree.sinks.push(end);
            for n in touched {
                self.dist[n] = f64::INFINITY;
                self.prev[n] = None;
            }
        }
        Some(tree)
    }
}
