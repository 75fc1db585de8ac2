//! Upset injection and configuration-bit sensitivity campaigns.

mod device;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Bitstream, BitstreamError, BitstreamLayout, Coord, FabricArch, ResourceKind};
use crate::dfg::{eval_dfg, DataflowGraph};
use crate::harden::HardenedDesign;
use crate::pnr::{IoBinding, Placement};
use crate::sim::{compare_expected, Equivalence, FaultState, SimError, Simulator};

pub use device::{
    build_device_model, lower_sensitivity, static_cost, DeviceBit, DeviceModel, DeviceResource, LowerReport,
    ResourceUsage, DEFAULT_FRAME_FACTOR,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeuError {
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error("fault-free baseline differs from the reference: {0}")]
    Baseline(String),
    #[error("cells {0} and {1} are not adjacent")]
    NotAdjacent(Coord, Coord),
    #[error("cell {0} has no configuration bit {1}")]
    NoSuchBit(Coord, usize),
    #[error("random scope asks for {want} of {total} bits")]
    Scope { want: usize, total: usize },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Flips `bits` in a copy of `bitstream`. The check bytes are not updated,
/// as a real upset leaves them stale.
pub fn inject(bitstream: &Bitstream, layout: &BitstreamLayout, bits: &[usize]) -> Result<Bitstream, BitstreamError> {
    let mut out = bitstream.clone();
    for &b in bits {
        out.flip(layout, b)?;
    }
    Ok(out)
}

/// Global indices of every configuration bit of one tile.
pub fn tile_bits(layout: &BitstreamLayout, at: Coord) -> Vec<usize> {
    layout
        .fields()
        .iter()
        .filter(|f| f.coord == at)
        .flat_map(|f| f.start..f.start + f.width as usize)
        .collect()
}

/// A two-bit upset: bit `ia` of tile `a` together with bit `ib` of the
/// neighbouring tile `b`.
pub fn adjacent_mbu(layout: &BitstreamLayout, a: Coord, b: Coord, ia: usize, ib: usize) -> Result<[usize; 2], SeuError> {
    if a.chebyshev(b) != 1 {
        return Err(SeuError::NotAdjacent(a, b));
    }
    let pick = |at: Coord, i: usize| tile_bits(layout, at).get(i).copied().ok_or(SeuError::NoSuchBit(at, i));
    Ok([pick(a, ia)?, pick(b, ib)?])
}

/// Unordered pairs of tiles at Chebyshev distance 1.
pub fn adjacent_pairs(arch: &FabricArch) -> Vec<(Coord, Coord)> {
    let mut out = Vec::new();
    for a in arch.coords() {
        for b in arch.coords() {
            if a < b && a.chebyshev(b) == 1 {
                out.push((a, b));
            }
        }
    }
    out
}

/// Result of enumerating every adjacent-tile two-bit upset against a
/// replicated placement.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbuScan {
    pub tile_pairs: usize,
    pub upsets: u64,
    /// Upsets hitting two different replicas of one triple.
    pub conflicts: u64,
    /// The first few conflicting upsets, as bit pairs.
    pub examples: Vec<[usize; 2]>,
}

/// Enumerates all two-bit upsets spanning adjacent tiles and counts those
/// that touch bits of two different replicas of the same triple. A tile's
/// bits belong to the replica placed on it.
pub fn scan_replica_mbus(
    design: &HardenedDesign,
    arch: &FabricArch,
    layout: &BitstreamLayout,
    placement: &Placement,
) -> MbuScan {
    let mut owner: BTreeMap<Coord, (usize, u8)> = BTreeMap::new();
    for (t, triple) in design.triples().iter().enumerate() {
        for (d, &n) in triple.iter().enumerate() {
            owner.insert(placement.sites[n], (t, d as u8));
        }
    }
    let mut scan = MbuScan::default();
    for (a, b) in adjacent_pairs(arch) {
        scan.tile_pairs += 1;
        let (ba, bb) = (tile_bits(layout, a), tile_bits(layout, b));
        let hit = matches!((owner.get(&a), owner.get(&b)), (Some(x), Some(y)) if x.0 == y.0 && x.1 != y.1);
        for &i in &ba {
            for &j in &bb {
                scan.upsets += 1;
                if hit {
                    scan.conflicts += 1;
                    if scan.examples.len() < 8 {
                        scan.examples.push([i, j]);
                    }
                }
            }
        }
    }
    scan
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitClass {
    Benign,
    Detected,
    Sdc,
}

impl BitClass {
    pub const ALL: [BitClass; 3] = [BitClass::Benign, BitClass::Detected, BitClass::Sdc];

    pub fn name(self) -> &'static str {
        match self {
            BitClass::Benign => "benign",
            BitClass::Detected => "detected",
            BitClass::Sdc => "sdc",
        }
    }
}

/// Which bits a campaign flips.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    All,
    Random { count: usize, seed: u64 },
    Kinds(BTreeSet<ResourceKind>),
}

impl Scope {
    pub fn bits(&self, layout: &BitstreamLayout) -> Result<Vec<usize>, SeuError> {
        let total = layout.total_bits();
        Ok(match self {
            Scope::All => (0..total).collect(),
            Scope::Random { count, seed } => {
                if *count > total {
                    return Err(SeuError::Scope { want: *count, total });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut v = sample(&mut rng, total, *count).into_vec();
                v.sort_unstable();
                v
            }
            Scope::Kinds(kinds) => layout
                .fields()
                .iter()
                .filter(|f| kinds.contains(&f.kind))
                .flat_map(|f| f.start..f.start + f.width as usize)
                .collect(),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Scope::All => "all".into(),
            Scope::Random { count, seed } => format!("random({count},{seed})"),
            Scope::Kinds(k) => k.iter().map(|k| k.name()).collect::<Vec<_>>().join("+"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitRecord {
    pub bit_index: usize,
    pub frame: usize,
    pub offset: usize,
    pub resource_kind: ResourceKind,
    pub coord: Coord,
    pub class: BitClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub kernel: String,
    pub scope: String,
    pub vectors: usize,
    pub seed: u64,
    pub total_bits: usize,
    /// Ascending by bit index.
    pub records: Vec<BitRecord>,
}

/// Per-class totals, overall and per resource kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub kernel: String,
    pub scope: String,
    pub vectors: usize,
    pub seed: u64,
    pub layout_bits: usize,
    pub injected: usize,
    pub totals: BTreeMap<BitClass, usize>,
    pub by_kind: BTreeMap<String, BTreeMap<BitClass, usize>>,
}

impl SensitivityMap {
    pub fn count(&self, class: BitClass) -> usize {
        self.records.iter().filter(|r| r.class == class).count()
    }

    pub fn class_of(&self, bit: usize) -> Option<BitClass> {
        self.records
            .binary_search_by_key(&bit, |r| r.bit_index)
            .ok()
            .map(|i| self.records[i].class)
    }

    pub fn kinds_with(&self, class: BitClass) -> BTreeSet<ResourceKind> {
        self.records
            .iter()
            .filter(|r| r.class == class)
            .map(|r| r.resource_kind)
            .collect()
    }

    pub fn summary(&self) -> CampaignSummary {
        let mut totals: BTreeMap<BitClass, usize> = BitClass::ALL.iter().map(|c| (*c, 0)).collect();
        let mut by_kind: BTreeMap<String, BTreeMap<BitClass, usize>> = BTreeMap::new();
        for r in &self.records {
            *totals.get_mut(&r.class).unwrap() += 1;
            *by_kind
                .entry(r.resource_kind.name())
                .or_insert_with(|| BitClass::ALL.iter().map(|c| (*c, 0)).collect())
                .get_mut(&r.class)
                .unwrap() += 1;
        }
        CampaignSummary {
            kernel: self.kernel.clone(),
            scope: self.scope.clone(),
            vectors: self.vectors,
            seed: self.seed,
            layout_bits: self.total_bits,
            injected: self.records.len(),
            totals,
            by_kind,
        }
    }
}

/// Everything a campaign needs, prepared once.
pub struct Campaign<'a> {
    sim: Simulator,
    bitstream: &'a Bitstream,
    dfg: &'a DataflowGraph,
    vectors: &'a [Vec<u64>],
    golden: Vec<Vec<u64>>,
}

impl<'a> Campaign<'a> {
    /// Checks that the fault-free fabric reproduces the reference before any
    /// injection.
    pub fn new(
        arch: &FabricArch,
        bitstream: &'a Bitstream,
        io: &IoBinding,
        dfg: &'a DataflowGraph,
        vectors: &'a [Vec<u64>],
    ) -> Result<Self, SeuError> {
        let sim = Simulator::new(arch, io);
        bitstream.validate(sim.layout())?;
        let golden = vectors
            .iter()
            .map(|v| eval_dfg(dfg, v).map_err(|e| SeuError::Baseline(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let base = sim
            .run(bitstream, vectors, &FaultState::none())
            .map_err(|e| SeuError::Baseline(e.to_string()))?;
        let rep = compare_expected(&base, &golden);
        if rep.class != Equivalence::Equal {
            return Err(SeuError::Baseline(format!(
                "{:?} with {} mismatching vectors",
                rep.class,
                rep.mismatches()
            )));
        }
        Ok(Campaign {
            sim,
            bitstream,
            dfg,
            vectors,
            golden,
        })
    }

    pub fn layout(&self) -> &BitstreamLayout {
        self.sim.layout()
    }

    /// Outcome of flipping `bits` together. A configuration the fabric
    /// cannot decode counts as silent corruption.
    pub fn classify(&self, bits: &[usize]) -> BitClass {
        match self.sim.run(self.bitstream, self.vectors, &FaultState::flip(bits.iter().copied())) {
            Err(SimError::Undecodable(_)) => BitClass::Sdc,
            Err(e) => panic!("campaign simulation failed: {e}"),
            Ok(r) => match compare_expected(&r, &self.golden).class {
                Equivalence::Equal => BitClass::Benign,
                Equivalence::DetectedOnly => BitClass::Detected,
                Equivalence::Corrupted => BitClass::Sdc,
            },
        }
    }

    /// Classifies every bit in `scope` on `jobs` worker threads (0 picks the
    /// default). Results are ordered by bit index whatever the thread count.
    pub fn run(&self, scope: &Scope, seed: u64, jobs: usize) -> Result<SensitivityMap, SeuError> {
        let layout = self.layout();
        let bits = scope.bits(layout)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SeuError::Pool(e.to_string()))?;
        let classes: Vec<BitClass> = pool.install(|| bits.par_iter().map(|&b| self.classify(&[b])).collect());
        let records = bits
            .iter()
            .zip(classes)
            .map(|(&b, class)| {
                let info = layout.bit(b);
                BitRecord {
                    bit_index: b,
                    frame: info.frame,
                    offset: info.offset,
                    resource_kind: info.kind,
                    coord: info.coord,
                    class,
                }
            })
            .collect();
        Ok(SensitivityMap {
            kernel: self.dfg.name.clone(),
            scope: scope.describe(),
            vectors: self.vectors.len(),
            seed,
            total_bits: layout.total_bits(),
            records,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_campaign(
    arch: &FabricArch,
    bitstream: &Bitstream,
    io: &IoBinding,
    dfg: &DataflowGraph,
    vectors: &[Vec<u64>],
    scope: &Scope,
    seed: u64,
    jobs: usize,
) -> Result<SensitivityMap, SeuError> {
    Campaign::new(arch, bitstream, io, dfg, vectors)?.run(scope, seed, jobs)
}
