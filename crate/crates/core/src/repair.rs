//! Permanent-fault repair: spare cells, precompiled alternate
//! configurations and run-time re-placement around faulty cells.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{decode_bitstream, Bitstream, Coord, FabricArch};
use crate::dfg::Op;
use crate::harden::HardenedDesign;
use crate::pnr::{compile, Compiled, PnrError};
use crate::scrub::DEFAULT_FRAME_COST;
use crate::sim::{compare_golden, random_vectors, Equivalence, FaultState, Simulator};

/// Vectors used to verify every repaired configuration.
pub const VERIFY_VECTORS: usize = 1000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RepairError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{want} precompiled configurations requested, only {available} feasible exclusion sets")]
    TooMany { want: usize, available: usize },
    #[error(transparent)]
    Pnr(#[from] PnrError),
    #[error("repaired configuration is not equivalent: {0}")]
    NotEquivalent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every frame is rewritten.
    FullOverlay,
    /// Only frames whose contents changed are rewritten.
    PerCell,
}

impl Granularity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full_overlay" | "full" => Some(Granularity::FullOverlay),
            "per_cell" | "cell" => Some(Granularity::PerCell),
            _ => None,
        }
    }
}

/// Spare cells required per functional-unit kind.
pub type SparePolicy = BTreeMap<Op, usize>;

/// Unused cells of each kind that can host the design's nodes of that kind.
pub fn spare_counts(design: &HardenedDesign, arch: &FabricArch) -> BTreeMap<Op, usize> {
    let need = design.resource_counts();
    let mut out = BTreeMap::new();
    for kind in Op::ALL {
        let variants: BTreeSet<_> = need.iter().filter(|(c, _)| c.kind == kind).map(|(c, _)| c.variant).collect();
        let have = arch
            .cells()
            .values()
            .filter(|c| c.kind == kind && (variants.is_empty() || variants.contains(&c.variant)))
            .count();
        out.insert(kind, have.saturating_sub(need.kind(kind)));
    }
    out
}

pub fn check_policy(design: &HardenedDesign, arch: &FabricArch, policy: &SparePolicy) -> Result<(), RepairError> {
    let spares = spare_counts(design, arch);
    for (&kind, &want) in policy {
        let have = spares[&kind];
        if have < want {
            return Err(RepairError::Infeasible(format!("{want} spare {kind} cells requested, fabric has {have}")));
        }
    }
    Ok(())
}

/// Reconfiguration cycles to load `next` over `current`.
pub fn reconfiguration_cycles(current: &Bitstream, next: &Bitstream, granularity: Granularity, t_w: u64) -> u64 {
    let frames = match granularity {
        Granularity::FullOverlay => next.frames.len(),
        Granularity::PerCell => current.changed_frames(next).len(),
    };
    frames as u64 * t_w
}

/// Checks a repaired compile against the reference on `VERIFY_VECTORS`
/// vectors, with the faulty cells stuck at 0, and that no excluded cell is
/// configured.
pub fn verify(c: &Compiled, faulty: &BTreeSet<Coord>, seed: u64) -> Result<(), RepairError> {
    let decoded = decode_bitstream(&c.layout, &c.bitstream).map_err(|e| RepairError::NotEquivalent(e.to_string()))?;
    if let Some(at) = decoded.config.active_cells(&c.arch).find(|a| faulty.contains(a)) {
        return Err(RepairError::NotEquivalent(format!("faulty cell {at} is configured")));
    }
    let dfg = &c.design.original;
    let vectors = random_vectors(dfg, VERIFY_VECTORS, seed);
    let faults = FaultState {
        flipped: BTreeSet::new(),
        stuck: faulty.clone(),
    };
    let r = Simulator::new(&c.arch, &c.io)
        .run(&c.bitstream, &vectors, &faults)
        .map_err(|e| RepairError::NotEquivalent(e.to_string()))?;
    let rep = compare_golden(&r, dfg, &vectors);
    if rep.class != Equivalence::Equal {
        return Err(RepairError::NotEquivalent(format!(
            "{:?}, {} of {} vectors differ",
            rep.class,
            rep.mismatches(),
            vectors.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecompiledConfig {
    pub excluded: BTreeSet<Coord>,
    pub bitstream: Bitstream,
    pub used: BTreeSet<Coord>,
    /// Frames differing from the primary configuration.
    pub changed_frames: Vec<usize>,
    pub reconfiguration_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub granularity: Granularity,
    /// Cells used by the primary configuration.
    pub used: BTreeSet<Coord>,
    /// Unused cells by kind.
    pub spares: BTreeMap<Op, Vec<Coord>>,
    pub configs: Vec<PrecompiledConfig>,
}

impl RepairPlan {
    /// Fraction of single-cell faults over used cells that some
    /// configuration avoids.
    pub fn coverage(&self) -> f64 {
        self.coverage_of(&self.used)
    }

    pub fn coverage_of(&self, cells: &BTreeSet<Coord>) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let hit = cells.iter().filter(|c| self.config_for(**c).is_some()).count();
        hit as f64 / cells.len() as f64
    }

    /// First configuration that avoids the faulty cell.
    pub fn config_for(&self, faulty: Coord) -> Option<&PrecompiledConfig> {
        self.configs.iter().find(|p| p.excluded.contains(&faulty))
    }
}

pub fn coverage(plan: &RepairPlan) -> f64 {
    plan.coverage()
}

/// Used cells ordered by the scarcity of their kind's spares, then by
/// coordinate: the order exclusion sets are drawn in.
pub fn exclusion_order(primary: &Compiled) -> Vec<Coord> {
    let spares = spare_counts(&primary.design, &primary.arch);
    let mut cells: Vec<Coord> = primary.placement.used().into_iter().collect();
    cells.sort_by_key(|&c| {
        let kind = primary.arch.cell(c).unwrap().kind;
        (spares[&kind], kind, c)
    });
    cells
}

/// Compiles `k` alternate configurations, each avoiding one used cell of the
/// primary configuration. Exclusions that cannot be placed or routed are
/// skipped; every kept configuration is verified against the reference.
pub fn precompile(
    design: &HardenedDesign,
    arch: &FabricArch,
    policy: &SparePolicy,
    k: usize,
    granularity: Granularity,
    seed: u64,
) -> Result<RepairPlan, RepairError> {
    check_policy(design, arch, policy)?;
    let primary = compile(design, arch, seed, &BTreeSet::new())?;
    let used = primary.placement.used();
    let mut spares: BTreeMap<Op, Vec<Coord>> = BTreeMap::new();
    for (cell, coords) in primary.placement.spares(arch) {
        spares.entry(cell.kind).or_default().extend(coords);
    }
    let mut plan = RepairPlan {
        granularity,
        used,
        spares,
        configs: Vec::new(),
    };
    if k == 0 {
        return Ok(plan);
    }
    let order = exclusion_order(&primary);
    let built: Vec<Option<PrecompiledConfig>> = order
        .par_iter()
        .map(|&cell| {
            let excluded = BTreeSet::from([cell]);
            let c = match compile(design, arch, seed, &excluded) {
                Ok(c) => c,
                Err(e) if e.is_infeasible() || e.is_unroutable() => return Ok(None),
                Err(e) => return Err(RepairError::Pnr(e)),
            };
            verify(&c, &excluded, seed)?;
            Ok(Some(PrecompiledConfig {
                changed_frames: primary.bitstream.changed_frames(&c.bitstream),
                reconfiguration_cycles: reconfiguration_cycles(&primary.bitstream, &c.bitstream, granularity, DEFAULT_FRAME_COST),
                used: c.placement.used(),
                excluded,
                bitstream: c.bitstream,
            }))
        })
        .collect::<Result<_, RepairError>>()?;
    let feasible: Vec<PrecompiledConfig> = built.into_iter().flatten().collect();
    if feasible.len() < k {
        return Err(RepairError::TooMany {
            want: k,
            available: feasible.len(),
        });
    }
    plan.configs = feasible.into_iter().take(k).collect();
    Ok(plan)
}

/// Repair latency split into its two costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairLatency {
    /// Placement and routing effort, in work units (annealing moves plus
    /// router expansions); zero for precompiled repair.
    pub compile_work: u64,
    pub reconfiguration_cycles: u64,
}

impl RepairLatency {
    pub fn total(&self) -> u64 {
        self.compile_work + self.reconfiguration_cycles
    }
}

#[derive(Clone, Debug)]
pub struct Repaired {
    pub compiled: Compiled,
    pub latency: RepairLatency,
}

/// Re-places and re-routes the design around `faulty` cells.
pub fn dynamic_repair(
    design: &HardenedDesign,
    arch: &FabricArch,
    current: &Bitstream,
    faulty: &BTreeSet<Coord>,
    granularity: Granularity,
    seed: u64,
) -> Result<Repaired, RepairError> {
    let c = compile(design, arch, seed, faulty).map_err(|e| match e {
        e if e.is_infeasible() => RepairError::Infeasible(e.to_string()),
        e => RepairError::Pnr(e),
    })?;
    verify(&c, faulty, seed)?;
    let latency = RepairLatency {
        compile_work: c.work,
        reconfiguration_cycles: reconfiguration_cycles(current, &c.bitstream, granularity, DEFAULT_FRAME_COST),
    };
    Ok(Repaired { compiled: c, latency })
}

/// Repair from a plan: the cost is reconfiguration alone.
pub fn precompiled_repair<'a>(plan: &'a RepairPlan, current: &Bitstream, faulty: Coord) -> Option<(&'a PrecompiledConfig, RepairLatency)> {
    let p = plan.config_for(faulty)?;
    Some((
        p,
        RepairLatency {
            compile_work: 0,
            reconfiguration_cycles: reconfiguration_cycles(current, &p.bitstream, plan.granularity, DEFAULT_FRAME_COST),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Cell, FabricMode, FuVariant};
    use crate::dfg::{gen_conv, gen_sad, DataflowGraph};
    use crate::harden::{assign_hardening, minimal_fabric, size_requirements, HardeningMode};

    /// 4x4 TMR fabric with five multipliers: one spare beyond conv2x2.
    fn fabric_4x4(width: crate::word::Width) -> FabricArch {
        let kinds = [
            [Op::Mul, Op::Mul, Op::Mul, Op::Mul],
            [Op::Add, Op::Add, Op::Add, Op::Add],
            [Op::SubAbs, Op::SubAbs, Op::SubAbs, Op::SubAbs],
            [Op::Mul, Op::Add, Op::SubAbs, Op::SubAbs],
        ];
        let map = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| (Coord::new(r, c), Cell::new(kinds[r][c], FuVariant::Tmr)))
            .collect();
        FabricArch::new("f4", 4, 4, 6, width, FabricMode::TmrFu, 2, map).unwrap()
    }

    fn tmr(dfg: &DataflowGraph) -> HardenedDesign {
        assign_hardening(dfg, &HardeningMode::TmrFu).unwrap()
    }

    #[test]
    fn four_configs_cover_every_multiplier() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        assert_eq!(spare_counts(&design, &arch)[&Op::Mul], 1);
        let policy = SparePolicy::from([(Op::Mul, 1)]);
        let plan = precompile(&design, &arch, &policy, 4, Granularity::PerCell, 0).unwrap();
        assert_eq!(plan.configs.len(), 4);
        let muls: BTreeSet<Coord> = plan.used.iter().copied().filter(|&c| arch.cell(c).unwrap().kind == Op::Mul).collect();
        assert_eq!(muls.len(), 4);
        let excluded: BTreeSet<Coord> = plan.configs.iter().flat_map(|p| p.excluded.iter().copied()).collect();
        assert_eq!(excluded, muls);
        assert_eq!(plan.coverage_of(&muls), 1.0);
        for p in &plan.configs {
            let layout = crate::arch::bit_layout(&arch);
            let decoded = decode_bitstream(&layout, &p.bitstream).unwrap();
            assert!(decoded.config.active_cells(&arch).all(|a| !p.excluded.contains(&a)));
            assert!(p.reconfiguration_cycles <= 4 * DEFAULT_FRAME_COST);
        }
        // 4 of 7 used cells covered.
        assert!((plan.coverage() - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_plan_has_no_coverage() {
        let dfg = gen_conv(2);
        let plan = precompile(&tmr(&dfg), &fabric_4x4(dfg.width), &SparePolicy::new(), 0, Granularity::FullOverlay, 0).unwrap();
        assert!(plan.configs.is_empty());
        assert_eq!(coverage(&plan), 0.0);
    }

    #[test]
    fn coverage_counts_by_enumeration() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        let plan = precompile(&design, &arch, &SparePolicy::new(), 5, Granularity::PerCell, 0).unwrap();
        assert!((plan.coverage() - 5.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn policy_shortfall_is_infeasible() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let req = size_requirements(std::slice::from_ref(&dfg), &HardeningMode::TmrFu).unwrap();
        let arch = minimal_fabric(&req, FabricMode::TmrFu, 6, dfg.width, 2).unwrap();
        let policy = SparePolicy::from([(Op::Mul, 1)]);
        assert!(matches!(
            precompile(&design, &arch, &policy, 1, Granularity::PerCell, 0),
            Err(RepairError::Infeasible(_))
        ));
        assert!(matches!(
            precompile(&design, &fabric_4x4(dfg.width), &policy, 8, Granularity::PerCell, 0),
            Err(RepairError::TooMany { .. })
        ));
    }

    #[test]
    fn dynamic_repair_avoids_faulty_multiplier() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        let primary = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
        let faulty = BTreeSet::from([primary.placement.sites[0]]);
        let r = dynamic_repair(&design, &arch, &primary.bitstream, &faulty, Granularity::PerCell, 0).unwrap();
        assert!(!r.compiled.placement.used().contains(&primary.placement.sites[0]));
        assert!(r.latency.compile_work > 0);
        assert_eq!(r.latency.total(), r.latency.compile_work + r.latency.reconfiguration_cycles);
        // The unrepaired configuration is corrupted by the stuck cell.
        let vectors = random_vectors(&dfg, 50, 1);
        let stuck = FaultState { flipped: BTreeSet::new(), stuck: faulty };
        let before = Simulator::new(&arch, &primary.io).run(&primary.bitstream, &vectors, &stuck).unwrap();
        assert_eq!(compare_golden(&before, &dfg, &vectors).class, Equivalence::Corrupted);
    }

    #[test]
    fn all_multipliers_faulty_is_infeasible() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        let primary = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
        let faulty: BTreeSet<Coord> = arch.cells().iter().filter(|(_, c)| c.kind == Op::Mul).map(|(a, _)| *a).collect();
        assert!(matches!(
            dynamic_repair(&design, &arch, &primary.bitstream, &faulty, Granularity::PerCell, 0),
            Err(RepairError::Infeasible(_))
        ));
    }

    #[test]
    fn unused_faulty_cell_changes_nothing() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        let primary = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
        let unused = arch.coords().find(|c| arch.cell(*c).is_some() && !primary.placement.used().contains(c)).unwrap();
        let r = dynamic_repair(&design, &arch, &primary.bitstream, &BTreeSet::from([unused]), Granularity::PerCell, 0).unwrap();
        assert!(!r.compiled.placement.used().contains(&unused));
        verify(&r.compiled, &BTreeSet::from([unused]), 3).unwrap();
    }

    #[test]
    fn every_single_fault_is_repairable_with_spares() {
        for dfg in [gen_conv(2), gen_sad(2)] {
            let mode = HardeningMode::TmrFu;
            let design = assign_hardening(&dfg, &mode).unwrap();
            let mut req = size_requirements(std::slice::from_ref(&dfg), &mode).unwrap();
            for (cell, _) in design.resource_counts().iter() {
                req.add(cell, 1);
            }
            let arch = minimal_fabric(&req, FabricMode::TmrFu, 6, dfg.width, 2).unwrap();
            let primary = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
            for at in primary.placement.used() {
                let r = dynamic_repair(&design, &arch, &primary.bitstream, &BTreeSet::from([at]), Granularity::PerCell, 0);
                assert!(r.is_ok(), "{} fault at {at}: {:?}", dfg.name, r.err());
            }
        }
    }

    #[test]
    fn granularity_changes_reconfiguration_cost() {
        let dfg = gen_conv(2);
        let design = tmr(&dfg);
        let arch = fabric_4x4(dfg.width);
        let primary = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
        let faulty = BTreeSet::from([primary.placement.sites[0]]);
        let full = dynamic_repair(&design, &arch, &primary.bitstream, &faulty, Granularity::FullOverlay, 0).unwrap();
        let cell = dynamic_repair(&design, &arch, &primary.bitstream, &faulty, Granularity::PerCell, 0).unwrap();
        assert_eq!(full.latency.reconfiguration_cycles, 4 * DEFAULT_FRAME_COST);
        assert!(cell.latency.reconfiguration_cycles <= full.latency.reconfiguration_cycles);
        assert_eq!(full.compiled.bitstream, cell.compiled.bitstream);
    }
}
