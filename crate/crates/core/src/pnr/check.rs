//! Checkers that validate compile results without trusting the placer or
//! router.

use std::collections::{BTreeMap, BTreeSet};

use super::route::terminals;
use super::{IoBinding, Netlist, Placement, Routing};
use crate::arch::{switch_components, FabricArch, FabricConfig, Pin};
use crate::harden::HardenedDesign;

/// Pairs of nodes of one replica triple closer than the separation distance.
pub fn separation_violations(design: &HardenedDesign, arch: &FabricArch, placement: &Placement) -> Vec<(usize, usize)> {
    let d = arch.separation();
    let mut out = Vec::new();
    for t in design.triples() {
        for (x, &a) in t.iter().enumerate() {
            for &b in &t[x + 1..] {
                if placement.sites[a].chebyshev(placement.sites[b]) < d {
                    out.push((a, b));
                }
            }
        }
    }
    out
}

pub fn check_placement(design: &HardenedDesign, arch: &FabricArch, placement: &Placement) -> Result<(), String> {
    if placement.sites.len() != design.dfg.nodes.len() {
        return Err("placement does not cover every node".into());
    }
    let mut seen = BTreeSet::new();
    for (i, &at) in placement.sites.iter().enumerate() {
        let name = &design.dfg.nodes[i].name;
        if !seen.insert(at) {
            return Err(format!("cell {at} holds two nodes"));
        }
        if placement.excluded.contains(&at) {
            return Err(format!("node `{name}` sits on excluded cell {at}"));
        }
        let cell = arch.cell(at).ok_or_else(|| format!("node `{name}` on empty tile {at}"))?;
        let need = design.cell(i);
        if !cell.supports(need.kind) || cell.variant != need.variant {
            return Err(format!("node `{name}` needs {need}, cell {at} is {cell}"));
        }
    }
    if let Some((a, b)) = separation_violations(design, arch, placement).first() {
        return Err(format!(
            "replicas `{}` and `{}` closer than {}",
            design.dfg.nodes[*a].name,
            design.dfg.nodes[*b].name,
            arch.separation()
        ));
    }
    Ok(())
}

/// Route trees are trees, connect their terminals and share no node.
pub fn check_routing(
    netlist: &Netlist,
    placement: &Placement,
    arch: &FabricArch,
    io: &IoBinding,
    routing: &Routing,
) -> Result<(), String> {
    let terms = terminals(netlist, placement, arch, io);
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for tree in &routing.trees {
        let net = &netlist.nets[tree.net];
        let t = &terms[tree.net];
        if !t.sources.contains(&tree.source) {
            return Err(format!("net `{}` starts off its driver", net.name));
        }
        let nodes: BTreeSet<usize> = tree.nodes.iter().copied().collect();
        if nodes.len() != tree.nodes.len() || tree.edges.len() + 1 != nodes.len() {
            return Err(format!("net `{}` is not a tree", net.name));
        }
        // Every edge attaches a new child to an earlier node.
        let mut reached = BTreeSet::from([tree.source]);
        for &(p, c, _) in &tree.edges {
            if !reached.contains(&p) || !reached.insert(c) {
                return Err(format!("net `{}` has a disconnected or cyclic edge", net.name));
            }
        }
        if reached != nodes {
            return Err(format!("net `{}` has unreachable nodes", net.name));
        }
        for (k, targets) in t.sinks.iter().enumerate() {
            let hit = tree.sinks.get(k).copied();
            if !hit.is_some_and(|h| targets.contains(&h) && nodes.contains(&h)) {
                return Err(format!("net `{}` misses sink {k}", net.name));
            }
        }
        for &n in &nodes {
            if let Some(other) = owner.insert(n, tree.net) {
                return Err(format!(
                    "routing node {n} shared by `{}` and `{}`",
                    netlist.nets[other].name, net.name
                ));
            }
        }
    }
    Ok(())
}

/// Recovers connectivity from a configuration: every sink pin must read the
/// electrical net its driver writes, and no electrical net may have two
/// drivers.
pub fn check_connectivity(
    arch: &FabricArch,
    config: &FabricConfig,
    netlist: &Netlist,
    placement: &Placement,
    io: &IoBinding,
) -> Result<(), String> {
    let comp = switch_components(arch, config);
    let w = arch.channel_width();
    let pin_node = |i: usize, pin: Pin| -> usize {
        let at = placement.sites[i];
        let cell = arch.cell(at).unwrap();
        let sel = config.cell(arch, at).unwrap().pin(cell, pin) as usize;
        arch.rr_node(arch.pin_wire(at, pin), sel % w)
    };
    let mut driven: BTreeMap<usize, usize> = BTreeMap::new();
    for (id, net) in netlist.nets.iter().enumerate() {
        let src = match net.driver {
            super::Driver::Node(i) => pin_node(i, Pin::Out),
            super::Driver::Source(k) => {
                let pad = io.sources[k].1.unwrap();
                arch.rr_node(pad.wire, pad.track)
            }
        };
        if let Some(other) = driven.insert(comp[src], id) {
            return Err(format!(
                "nets `{}` and `{}` drive one electrical net",
                netlist.nets[other].name, net.name
            ));
        }
        for sink in &net.sinks {
            let node = match *sink {
                super::Sink::Pin { node, pin } => pin_node(node, Pin::In(pin)),
                super::Sink::Output(k) => arch.rr_node(io.outputs[k].wire, io.outputs[k].track),
            };
            if comp[node] != comp[src] {
                return Err(format!("net `{}` does not reach {:?}", net.name, sink));
            }
        }
    }
    Ok(())
}
