//! Hardening transforms and fabric sizing.
//!
//! Naive TMR rewrites the kernel itself: every node becomes three replicas
//! followed by one shared voter. The FU-level modes leave the kernel intact
//! and instead pin each node to a hardened cell variant.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::arch::{bit_layout, ArchError, Cell, FabricArch, FabricMode, FuVariant, ResourceKind};
use crate::dfg::{Criticality, DataflowGraph, Node, Operand, Op, ReplicaTag};
use crate::word::Width;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HardenError {
    #[error("node `{0}` is already a voter; naive TMR expects an unhardened kernel")]
    VoteInInput(String),
    #[error("criticality override names unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` resolves to {variant}, which is not a hardened variant")]
    Unresolved { node: String, variant: FuVariant },
    #[error("no kernels given")]
    NoKernels,
}

/// Variant table for mixed-criticality designs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MixedPolicy {
    pub high: FuVariant,
    pub medium: FuVariant,
    pub low: FuVariant,
    /// Per-node overrides by node name.
    pub overrides: BTreeMap<String, FuVariant>,
}

impl Default for MixedPolicy {
    fn default() -> Self {
        MixedPolicy {
            high: FuVariant::Tmr,
            medium: FuVariant::Dwc,
            low: FuVariant::Edc,
            overrides: BTreeMap::new(),
        }
    }
}

impl MixedPolicy {
    fn resolve(&self, node: &Node) -> FuVariant {
        if let Some(v) = self.overrides.get(&node.name) {
            return *v;
        }
        match node.criticality {
            Criticality::High => self.high,
            Criticality::Medium => self.medium,
            Criticality::Low => self.low,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub enum HardeningMode {
    #[default]
    None,
    NaiveTmr,
    TmrFu,
    DwcFu,
    EdcFu,
    Mixed(MixedPolicy),
}

impl HardeningMode {
    pub fn name(&self) -> &'static str {
        match self {
            HardeningMode::None => "none",
            HardeningMode::NaiveTmr => "naive_tmr",
            HardeningMode::TmrFu => "tmr_fu",
            HardeningMode::DwcFu => "dwc_fu",
            HardeningMode::EdcFu => "edc_fu",
            HardeningMode::Mixed(_) => "mixed",
        }
    }

    /// Parses the command-line spellings (`naive`, `tmrfu`, ...) as well as
    /// the canonical names.
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" | "plain" => HardeningMode::None,
            "naive" | "naive_tmr" => HardeningMode::NaiveTmr,
            "tmrfu" | "tmr_fu" | "tmr" => HardeningMode::TmrFu,
            "dwc" | "dwc_fu" | "dwcfu" => HardeningMode::DwcFu,
            "edc" | "edc_fu" | "edcfu" => HardeningMode::EdcFu,
            "mixed" => HardeningMode::Mixed(MixedPolicy::default()),
            _ => return None,
        })
    }

    /// Fabric flavor a design in this mode is mapped onto.
    pub fn fabric_mode(&self) -> FabricMode {
        match self {
            HardeningMode::None | HardeningMode::NaiveTmr => FabricMode::Plain,
            HardeningMode::TmrFu => FabricMode::TmrFu,
            HardeningMode::DwcFu => FabricMode::DwcFu,
            HardeningMode::EdcFu => FabricMode::EdcFu,
            HardeningMode::Mixed(_) => FabricMode::Mixed,
        }
    }
}

impl fmt::Display for HardeningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A kernel ready for mapping: the (possibly rewritten) graph and the cell
/// variant every node must occupy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HardenedDesign {
    pub mode: HardeningMode,
    pub dfg: DataflowGraph,
    pub variants: Vec<FuVariant>,
    /// The kernel before hardening; the functional reference.
    pub original: DataflowGraph,
}

impl HardenedDesign {
    pub fn fabric_mode(&self) -> FabricMode {
        self.mode.fabric_mode()
    }

    /// Cell type required by node `i`.
    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(self.dfg.nodes[i].op, self.variants[i])
    }

    pub fn resource_counts(&self) -> ResourceCounts {
        let mut counts = ResourceCounts::default();
        for i in 0..self.dfg.nodes.len() {
            counts.add(self.cell(i), 1);
        }
        counts
    }

    /// Node indices of each replica triple, by domain.
    pub fn triples(&self) -> Vec<[usize; 3]> {
        let mut map: BTreeMap<usize, [Option<usize>; 3]> = BTreeMap::new();
        for (i, n) in self.dfg.nodes.iter().enumerate() {
            if let Some(tag) = n.replica {
                map.entry(tag.triple).or_default()[tag.domain as usize] = Some(i);
            }
        }
        map.into_values()
            .filter_map(|t| Some([t[0]?, t[1]?, t[2]?]))
            .collect()
    }
}

/// Triplicates every node and merges each triple with one voter.
pub fn tmr_naive(dfg: &DataflowGraph) -> Result<DataflowGraph, HardenError> {
    if let Some(n) = dfg.nodes.iter().find(|n| n.op == Op::Vote) {
        return Err(HardenError::VoteInInput(n.name.clone()));
    }
    let mut out = DataflowGraph::new(dfg.name.clone(), dfg.width);
    out.inputs = dfg.inputs.clone();
    let mut voted = Vec::with_capacity(dfg.nodes.len());
    for (i, node) in dfg.nodes.iter().enumerate() {
        let args: Vec<Operand> = node
            .args
            .iter()
            .map(|a| match *a {
                Operand::Node(j) => Operand::Node(voted[j]),
                other => other,
            })
            .collect();
        let mut replicas = Vec::with_capacity(3);
        for domain in 0..3u8 {
            let r = out.add_node(format!("{}_r{domain}", node.name), node.op, args.clone());
            let last = out.nodes.last_mut().unwrap();
            last.criticality = node.criticality;
            last.replica = Some(ReplicaTag { triple: i, domain });
            replicas.push(r);
        }
        out.add_node(format!("{}_v", node.name), Op::Vote, replicas);
        out.nodes.last_mut().unwrap().criticality = node.criticality;
        voted.push(out.nodes.len() - 1);
    }
    for o in &dfg.outputs {
        out.add_output(o.name.clone(), voted[o.node]);
    }
    Ok(out)
}

pub fn assign_hardening(dfg: &DataflowGraph, mode: &HardeningMode) -> Result<HardenedDesign, HardenError> {
    let (graph, variants) = match mode {
        HardeningMode::NaiveTmr => {
            let g = tmr_naive(dfg)?;
            let v = vec![FuVariant::Plain; g.nodes.len()];
            (g, v)
        }
        HardeningMode::Mixed(policy) => {
            if let Some(name) = policy.overrides.keys().find(|k| !dfg.nodes.iter().any(|n| &n.name == *k)) {
                return Err(HardenError::UnknownNode(name.clone()));
            }
            let mut v = Vec::with_capacity(dfg.nodes.len());
            for n in &dfg.nodes {
                let variant = policy.resolve(n);
                if variant == FuVariant::Plain {
                    return Err(HardenError::Unresolved {
                        node: n.name.clone(),
                        variant,
                    });
                }
                v.push(variant);
            }
            (dfg.clone(), v)
        }
        other => {
            let v = other.fabric_mode().uniform_variant().unwrap();
            (dfg.clone(), vec![v; dfg.nodes.len()])
        }
    };
    Ok(HardenedDesign {
        mode: mode.clone(),
        dfg: graph,
        variants,
        original: dfg.clone(),
    })
}

/// Required cells per (kind, variant).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResourceCounts {
    counts: BTreeMap<Cell, usize>,
}

impl ResourceCounts {
    pub fn add(&mut self, cell: Cell, n: usize) {
        *self.counts.entry(cell).or_insert(0) += n;
    }

    pub fn get(&self, cell: Cell) -> usize {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    /// Count of a kind summed over variants.
    pub fn kind(&self, kind: Op) -> usize {
        self.counts.iter().filter(|(c, _)| c.kind == kind).map(|(_, n)| n).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, usize)> + '_ {
        self.counts.iter().map(|(c, n)| (*c, *n))
    }

    /// Per-cell maximum of two requirement sets.
    pub fn max(&self, other: &ResourceCounts) -> ResourceCounts {
        let mut out = self.clone();
        for (c, n) in other.iter() {
            let e = out.counts.entry(c).or_insert(0);
            *e = (*e).max(n);
        }
        out
    }

    /// Every count multiplied by `factor`, for fabrics with slack.
    pub fn scaled(&self, factor: usize) -> ResourceCounts {
        ResourceCounts {
            counts: self.counts.iter().map(|(c, n)| (*c, n * factor)).collect(),
        }
    }

    /// Cells in canonical fill order: by kind, then variant.
    pub fn cell_list(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.total());
        for kind in Op::ALL {
            for variant in FuVariant::ALL {
                let c = Cell::new(kind, variant);
                cells.extend(std::iter::repeat_n(c, self.get(c)));
            }
        }
        cells
    }
}

impl Serialize for ResourceCounts {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.counts.iter().map(|(c, n)| (c.to_string(), n)))
    }
}

/// Per-kind maximum over kernels: the kernels share one fabric and run one
/// at a time.
pub fn size_requirements(kernels: &[DataflowGraph], mode: &HardeningMode) -> Result<ResourceCounts, HardenError> {
    if kernels.is_empty() {
        return Err(HardenError::NoKernels);
    }
    let mut req = ResourceCounts::default();
    for k in kernels {
        req = req.max(&assign_hardening(k, mode)?.resource_counts());
    }
    Ok(req)
}

/// Smallest square-ish grid holding the required cells, filled row-major in
/// [`ResourceCounts::cell_list`] order.
pub fn minimal_fabric(
    counts: &ResourceCounts,
    mode: FabricMode,
    channel_width: usize,
    data_width: Width,
    separation: usize,
) -> Result<FabricArch, ArchError> {
    FabricArch::enclosing(
        format!("min_{}", mode),
        &counts.cell_list(),
        channel_width,
        data_width,
        mode,
        separation,
    )
}

/// Configuration-bit breakdown of a fabric, the area proxy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AreaProxy {
    pub rows: usize,
    pub cols: usize,
    pub grid_cells: usize,
    pub fu_cells: usize,
    pub fu_bits: usize,
    pub cb_bits: usize,
    pub sb_bits: usize,
    pub total_bits: usize,
}

impl AreaProxy {
    pub fn routing_bits(&self) -> usize {
        self.cb_bits + self.sb_bits
    }

    pub fn routing_fraction(&self) -> f64 {
        self.routing_bits() as f64 / self.total_bits as f64
    }
}

pub fn area_proxy(arch: &FabricArch) -> AreaProxy {
    let layout = bit_layout(arch);
    let totals = layout.kind_totals();
    let get = |k: ResourceKind| totals.get(&k).copied().unwrap_or(0);
    let fu_bits = get(ResourceKind::FuOp) + (0..3).map(|r| get(ResourceKind::FuReplica(r))).sum::<usize>();
    AreaProxy {
        rows: arch.rows(),
        cols: arch.cols(),
        grid_cells: arch.rows() * arch.cols(),
        fu_cells: arch.cells().len(),
        fu_bits,
        cb_bits: get(ResourceKind::CbSelect),
        sb_bits: get(ResourceKind::SbSwitch),
        total_bits: layout.total_bits(),
    }
}
