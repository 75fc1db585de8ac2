//! Placement, routing and bitstream generation.

mod bitgen;
pub mod check;
mod place;
mod route;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{bit_layout, Bitstream, BitstreamLayout, Cell, Coord, FabricArch, FabricConfig, Pad};
use crate::dfg::{DataflowGraph, Operand};
use crate::harden::HardenedDesign;

pub use bitgen::{generate_bitstream, generate_config};
pub use place::{place, place_excluding};
pub use route::{route, RouteTree, Routing, RrGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PnrError {
    #[error("infeasible: kernel needs {need} {cell} cells, fabric offers {have}")]
    InsufficientCells { cell: Cell, need: usize, have: usize },
    #[error("infeasible: replica separation {d_min} cannot be met ({reason})")]
    Separation { d_min: usize, reason: String },
    #[error("infeasible: {need} {what} but the boundary has {have} pad slots")]
    IoExhausted { what: &'static str, need: usize, have: usize },
    #[error("kernel data width {kernel} differs from fabric data width {fabric}")]
    WidthMismatch { kernel: u32, fabric: u32 },
    #[error("unroutable: {overused} routing nodes still overused after {iterations} iterations")]
    Unroutable { iterations: usize, overused: usize },
    #[error("unroutable: net {net} cannot reach one of its sinks on any free track")]
    NoPath { net: usize },
    #[error("internal: {0}")]
    Internal(String),
}

impl PnrError {
    pub fn is_unroutable(&self) -> bool {
        matches!(self, PnrError::Unroutable { .. } | PnrError::NoPath { .. })
    }

    /// Placement-level infeasibility as opposed to routing failure.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            PnrError::InsufficientCells { .. }
                | PnrError::Separation { .. }
                | PnrError::IoExhausted { .. }
                | PnrError::WidthMismatch { .. }
        )
    }
}

/// A value entering the fabric through an input pad.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Input(usize),
    Const(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Driver {
    Node(usize),
    Source(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sink {
    Pin { node: usize, pin: u8 },
    Output(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub name: String,
    pub driver: Driver,
    pub sinks: Vec<Sink>,
}

/// Signal connectivity of a kernel. Pad source `k` carries `sources[k]`:
/// kernel inputs in port order, then distinct constants by first use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub nets: Vec<Net>,
    pub sources: Vec<Source>,
    pub outputs: usize,
}

impl Netlist {
    pub fn build(dfg: &DataflowGraph) -> Self {
        let mut sources: Vec<Source> = (0..dfg.inputs.len()).map(Source::Input).collect();
        for node in &dfg.nodes {
            for arg in &node.args {
                if let Operand::Const(c) = *arg {
                    if !sources.contains(&Source::Const(c)) {
                        sources.push(Source::Const(c));
                    }
                }
            }
        }
        let mut node_sinks = vec![Vec::new(); dfg.nodes.len()];
        let mut source_sinks = vec![Vec::new(); sources.len()];
        for (i, node) in dfg.nodes.iter().enumerate() {
            for (p, arg) in node.args.iter().enumerate() {
                let sink = Sink::Pin { node: i, pin: p as u8 };
                match *arg {
                    Operand::Node(j) => node_sinks[j].push(sink),
                    Operand::Input(k) => source_sinks[k].push(sink),
                    Operand::Const(c) => {
                        let k = sources.iter().position(|s| *s == Source::Const(c)).unwrap();
                        source_sinks[k].push(sink);
                    }
                }
            }
        }
        for (k, out) in dfg.outputs.iter().enumerate() {
            node_sinks[out.node].push(Sink::Output(k));
        }
        let mut nets = Vec::new();
        for (i, sinks) in node_sinks.into_iter().enumerate() {
            nets.push(Net {
                name: dfg.nodes[i].name.clone(),
                driver: Driver::Node(i),
                sinks,
            });
        }
        for (k, sinks) in source_sinks.into_iter().enumerate() {
            if !sinks.is_empty() {
                let name = match sources[k] {
                    Source::Input(i) => dfg.inputs[i].clone(),
                    Source::Const(c) => format!("#{c}"),
                };
                nets.push(Net {
                    name,
                    driver: Driver::Source(k),
                    sinks,
                });
            }
        }
        Netlist {
            nets,
            sources,
            outputs: dfg.outputs.len(),
        }
    }

    pub fn source_used(&self, k: usize) -> bool {
        self.nets.iter().any(|n| n.driver == Driver::Source(k))
    }
}

/// How kernel I/O meets the fabric boundary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoBinding {
    /// Kernel input count.
    pub inputs: usize,
    /// Per pad source: what it carries and, if any net uses it, its pad.
    pub sources: Vec<(Source, Option<Pad>)>,
    pub outputs: Vec<Pad>,
    /// Cycles a vector is held before outputs are sampled.
    pub latency: usize,
}

impl IoBinding {
    pub fn new(netlist: &Netlist, dfg: &DataflowGraph, arch: &FabricArch) -> Result<Self, PnrError> {
        let cap = (arch.rows() + arch.cols()) * arch.channel_width();
        if netlist.sources.len() > cap {
            return Err(PnrError::IoExhausted {
                what: "input sources",
                need: netlist.sources.len(),
                have: cap,
            });
        }
        if netlist.outputs > cap {
            return Err(PnrError::IoExhausted {
                what: "outputs",
                need: netlist.outputs,
                have: cap,
            });
        }
        let sources = netlist
            .sources
            .iter()
            .enumerate()
            .map(|(k, s)| (*s, netlist.source_used(k).then(|| arch.input_pad(k).unwrap())))
            .collect();
        let outputs = (0..netlist.outputs).map(|k| arch.output_pad(k).unwrap()).collect();
        Ok(IoBinding {
            inputs: dfg.inputs.len(),
            sources,
            outputs,
            latency: dfg.depth(),
        })
    }
}

/// Node-to-cell assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub sites: Vec<Coord>,
    /// Cells the placer was told to avoid.
    pub excluded: BTreeSet<Coord>,
}

impl Placement {
    pub fn used(&self) -> BTreeSet<Coord> {
        self.sites.iter().copied().collect()
    }

    /// Cells left unused (spares), excluded cells not counted.
    pub fn spares(&self, arch: &FabricArch) -> BTreeMap<Cell, Vec<Coord>> {
        let used = self.used();
        let mut out: BTreeMap<Cell, Vec<Coord>> = BTreeMap::new();
        for (&c, &cell) in arch.cells() {
            if !used.contains(&c) && !self.excluded.contains(&c) {
                out.entry(cell).or_default().push(c);
            }
        }
        out
    }
}

/// Everything produced by one compile.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub design: HardenedDesign,
    pub arch: FabricArch,
    pub layout: BitstreamLayout,
    pub netlist: Netlist,
    pub io: IoBinding,
    pub placement: Placement,
    pub routing: Routing,
    pub config: FabricConfig,
    pub bitstream: Bitstream,
    /// Deterministic effort measure: annealing moves plus router expansions.
    pub work: u64,
}

/// Places, routes and generates the bitstream, verifying every stage with
/// the independent checkers.
pub fn compile(
    design: &HardenedDesign,
    arch: &FabricArch,
    seed: u64,
    excluded: &BTreeSet<Coord>,
) -> Result<Compiled, PnrError> {
    if design.dfg.width != arch.data_width() {
        return Err(PnrError::WidthMismatch {
            kernel: design.dfg.width.bits(),
            fabric: arch.data_width().bits(),
        });
    }
    let netlist = Netlist::build(&design.dfg);
    let io = IoBinding::new(&netlist, &design.dfg, arch)?;
    let (placement, moves) = place::anneal(design, arch, &netlist, &io, seed, excluded)?;
    check::check_placement(design, arch, &placement).map_err(PnrError::Internal)?;
    let routing = route::route_netlist(&netlist, &placement, arch, &io, seed)?;
    check::check_routing(&netlist, &placement, arch, &io, &routing).map_err(PnrError::Internal)?;
    let layout = bit_layout(arch);
    let config = generate_config(design, &netlist, &placement, &routing, arch);
    check::check_connectivity(arch, &config, &netlist, &placement, &io).map_err(PnrError::Internal)?;
    let bitstream = crate::arch::encode_config(&layout, &config);
    let work = moves + routing.expansions;
    Ok(Compiled {
        design: design.clone(),
        arch: arch.clone(),
        layout,
        netlist,
        io,
        placement,
        routing,
        config,
        bitstream,
        work,
    })
}

/// Serializable compile summary.
#[derive(Clone, Debug, Serialize)]
pub struct CompileReport {
    pub kernel: String,
    pub mode: String,
    pub fabric: String,
    pub seed: u64,
    pub nodes: usize,
    pub voters: usize,
    pub placement: Vec<PlacedNode>,
    pub nets: usize,
    pub routing_nodes: usize,
    pub router_iterations: usize,
    pub wirelength: usize,
    pub config_bits: BTreeMap<String, usize>,
    pub total_config_bits: usize,
    pub frames: usize,
    pub separation_d_min: usize,
    pub separation_ok: bool,
    pub latency: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlacedNode {
    pub node: String,
    pub op: String,
    pub variant: String,
    pub row: usize,
    pub col: usize,
}

impl Compiled {
    pub fn report(&self, seed: u64) -> CompileReport {
        let dfg = &self.design.dfg;
        CompileReport {
            kernel: dfg.name.clone(),
            mode: self.design.mode.name().to_string(),
            fabric: self.arch.name().to_string(),
            seed,
            nodes: dfg.nodes.len(),
            voters: dfg.count(crate::dfg::Op::Vote),
            placement: dfg
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| PlacedNode {
                    node: n.name.clone(),
                    op: n.op.to_string(),
                    variant: self.design.variants[i].to_string(),
                    row: self.placement.sites[i].row,
                    col: self.placement.sites[i].col,
                })
                .collect(),
            nets: self.routing.trees.len(),
            routing_nodes: self.routing.trees.iter().map(|t| t.nodes.len()).sum(),
            router_iterations: self.routing.iterations,
            wirelength: self.routing.trees.iter().map(|t| t.edges.len()).sum(),
            config_bits: self
                .layout
                .kind_totals()
                .into_iter()
                .map(|(k, n)| (k.name(), n))
                .collect(),
            total_config_bits: self.layout.total_bits(),
            frames: self.layout.frames().len(),
            separation_d_min: self.arch.separation(),
            separation_ok: check::separation_violations(&self.design, &self.arch, &self.placement).is_empty(),
            latency: self.io.latency,
        }
    }
}
