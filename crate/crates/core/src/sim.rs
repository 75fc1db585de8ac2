//! Cycle-level simulation of a configured fabric.
//!
//! Functional units register their outputs; connection and switch boxes are
//! combinational pass transistors. An electrical net driven by several units
//! resolves as wired-OR and an undriven net reads 0. Each input vector is
//! held for `latency` cycles and the output pads are sampled afterwards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    bit_layout, decode_opcode, switch_components, Bitstream, BitstreamError, BitstreamLayout, Bits, Cell, Coord,
    FabricArch, FabricConfig, FuVariant, Function, Pin,
};
use crate::dfg::{eval_dfg, DataflowGraph, Op};
use crate::pnr::{IoBinding, Source};
use crate::word::{majority, Width};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error("undecodable configuration: {0}")]
    Undecodable(String),
    #[error("vector {vector} has {got} words, kernel has {expected} inputs")]
    VectorShape { vector: usize, expected: usize, got: usize },
    #[error("fault bit {index} outside the {total}-bit layout")]
    FaultOutOfRange { index: usize, total: usize },
}

/// Upsets and permanent faults applied to a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultState {
    /// Configuration bits flipped before decoding.
    pub flipped: BTreeSet<usize>,
    /// Cells whose output is stuck at 0.
    pub stuck: BTreeSet<Coord>,
}

impl FaultState {
    pub fn none() -> Self {
        FaultState::default()
    }

    pub fn flip(bits: impl IntoIterator<Item = usize>) -> Self {
        FaultState {
            flipped: bits.into_iter().collect(),
            stuck: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub latency: usize,
    /// Output words sampled for each vector.
    pub outputs: Vec<Vec<u64>>,
    /// Cells carrying a detection flag (DWC and EDC units).
    pub flag_cells: Vec<Coord>,
    /// Per vector, which of `flag_cells` raised their flag.
    pub flags: Vec<Vec<bool>>,
    /// Cycle at which each vector's outputs were sampled.
    pub sample_cycles: Vec<u64>,
}

impl SimResult {
    pub fn any_flag(&self) -> bool {
        self.flags.iter().flatten().any(|f| *f)
    }
}

/// Reusable simulator bound to one fabric and I/O binding.
#[derive(Clone, Debug)]
pub struct Simulator {
    arch: FabricArch,
    layout: BitstreamLayout,
    io: IoBinding,
    constants: Vec<u64>,
}

#[derive(Clone, Copy, Debug)]
struct Unit {
    at: Coord,
    cell: Cell,
    /// Routing node read by each input pin.
    inputs: [usize; 3],
    /// Routing node driven by the output.
    output: usize,
    flag: Option<usize>,
    stuck: bool,
}

impl Simulator {
    pub fn new(arch: &FabricArch, io: &IoBinding) -> Self {
        let w = arch.data_width();
        let constants = io
            .sources
            .iter()
            .map(|(s, _)| match *s {
                Source::Const(c) => w.from_signed(c),
                Source::Input(_) => 0,
            })
            .collect();
        Simulator {
            arch: arch.clone(),
            layout: bit_layout(arch),
            io: io.clone(),
            constants,
        }
    }

    pub fn layout(&self) -> &BitstreamLayout {
        &self.layout
    }

    pub fn arch(&self) -> &FabricArch {
        &self.arch
    }

    pub fn io(&self) -> &IoBinding {
        &self.io
    }

    /// Simulates a bitstream after applying `faults`. The raw payload is used:
    /// upsets are not corrected by the check bytes.
    pub fn run(&self, bitstream: &Bitstream, vectors: &[Vec<u64>], faults: &FaultState) -> Result<SimResult, SimError> {
        let mut bits = bitstream.payload(&self.layout)?;
        self.run_bits(&mut bits, vectors, faults)
    }

    pub fn run_bits(&self, bits: &mut Bits, vectors: &[Vec<u64>], faults: &FaultState) -> Result<SimResult, SimError> {
        let total = self.layout.total_bits();
        for &b in &faults.flipped {
            if b >= total {
                return Err(SimError::FaultOutOfRange { index: b, total });
            }
            bits.flip(b);
        }
        let config = self.layout.unpack(bits);
        for &b in &faults.flipped {
            bits.flip(b);
        }
        self.run_config(&config, vectors, &faults.stuck)
    }

    pub fn run_config(
        &self,
        config: &FabricConfig,
        vectors: &[Vec<u64>],
        stuck: &BTreeSet<Coord>,
    ) -> Result<SimResult, SimError> {
        let arch = &self.arch;
        let width = arch.data_width();
        let w = arch.channel_width();
        for (v, vec) in vectors.iter().enumerate() {
            if vec.len() != self.io.inputs {
                return Err(SimError::VectorShape {
                    vector: v,
                    expected: self.io.inputs,
                    got: vec.len(),
                });
            }
        }
        let comp = switch_components(arch, config);
        let net_of = |wire: usize, sel: u32| comp[arch.rr_node(wire, sel as usize)];

        // Only units with an enabled opcode copy take part.
        let mut units = Vec::new();
        let mut flag_cells = Vec::new();
        for (&at, &cell) in arch.cells() {
            let cc = config.cell(arch, at).unwrap();
            if cc.opcodes.iter().all(|&o| o == 0) {
                continue;
            }
            let mut inputs = [0usize; 3];
            for (p, input) in inputs.iter_mut().enumerate().take(cell.input_pins()) {
                let sel = cc.pin(cell, Pin::In(p as u8));
                if sel as usize >= w {
                    return Err(SimError::Undecodable(format!("cell {at} input {p} selects track {sel}")));
                }
                *input = net_of(arch.pin_wire(at, Pin::In(p as u8)), sel);
            }
            let sel = cc.pin(cell, Pin::Out);
            if sel as usize >= w {
                return Err(SimError::Undecodable(format!("cell {at} output selects track {sel}")));
            }
            let flag = cell.variant.has_flag().then(|| {
                flag_cells.push(at);
                flag_cells.len() - 1
            });
            units.push(Unit {
                at,
                cell,
                inputs,
                output: net_of(arch.pin_wire(at, Pin::Out), sel),
                flag,
                stuck: stuck.contains(&at),
            });
        }
        let source_nets: Vec<(usize, usize)> = self
            .io
            .sources
            .iter()
            .enumerate()
            .filter_map(|(k, (_, pad))| pad.map(|p| (k, comp[arch.rr_node(p.wire, p.track)])))
            .collect();
        let output_nets: Vec<usize> = self
            .io
            .outputs
            .iter()
            .map(|p| comp[arch.rr_node(p.wire, p.track)])
            .collect();

        let mut regs: Vec<Option<u64>> = vec![None; units.len()];
        let mut nets = vec![0u64; arch.rr_node_count()];
        let mut touched: Vec<usize> = Vec::new();
        let cycles = self.io.latency.max(1);
        let mut result = SimResult {
            latency: self.io.latency,
            outputs: Vec::with_capacity(vectors.len()),
            flag_cells,
            flags: Vec::with_capacity(vectors.len()),
            sample_cycles: Vec::with_capacity(vectors.len()),
        };
        let mut cycle = 0u64;
        for vec in vectors {
            let mut raised = vec![false; result.flag_cells.len()];
            let source_value = |k: usize| match self.io.sources[k].0 {
                Source::Input(i) => width.truncate(vec[i]),
                Source::Const(_) => self.constants[k],
            };
            let drive = |nets: &mut Vec<u64>, touched: &mut Vec<usize>, regs: &[Option<u64>]| {
                for &n in touched.iter() {
                    nets[n] = 0;
                }
                touched.clear();
                for &(k, n) in &source_nets {
                    nets[n] |= source_value(k);
                    touched.push(n);
                }
                for (u, reg) in units.iter().zip(regs) {
                    if let Some(v) = reg {
                        nets[u.output] |= v;
                        touched.push(u.output);
                    }
                }
            };
            for _ in 0..cycles {
                drive(&mut nets, &mut touched, &regs);
                for (i, u) in units.iter().enumerate() {
                    let cc = config.cell(arch, u.at).unwrap();
                    let args = [nets[u.inputs[0]], nets[u.inputs[1]], nets[u.inputs[2]]];
                    let (out, flag) = evaluate(u, cc.opcodes.as_slice(), cc.checker, width, &args[..u.cell.input_pins()]);
                    regs[i] = out;
                    if let (Some(f), true) = (u.flag, flag) {
                        raised[f] = true;
                    }
                }
                cycle += 1;
            }
            drive(&mut nets, &mut touched, &regs);
            result.outputs.push(output_nets.iter().map(|&n| nets[n]).collect());
            result.flags.push(raised);
            result.sample_cycles.push(cycle);
        }
        Ok(result)
    }
}

fn apply(kind: Op, code: u8, width: Width, args: &[u64]) -> Option<u64> {
    match decode_opcode(kind, code) {
        Function::Off => None,
        Function::NopZero => Some(0),
        Function::Op(op) => Some(op.apply(width, &args[..op.arity()])),
    }
}

/// One clock of a functional unit: the registered output (`None` when not
/// driving) and whether its checker fired.
fn evaluate(u: &Unit, opcodes: &[u8], checker: u8, width: Width, args: &[u64]) -> (Option<u64>, bool) {
    let kind = u.cell.kind;
    let stick = |v: Option<u64>| if u.stuck { v.map(|_| 0) } else { v };
    match u.cell.variant {
        FuVariant::Plain => (stick(apply(kind, opcodes[0], width, args)), false),
        FuVariant::Tmr => {
            let r: Vec<Option<u64>> = opcodes.iter().map(|&c| apply(kind, c, width, args)).collect();
            let enabled = r.iter().filter(|x| x.is_some()).count();
            let v = |i: usize| r[i].unwrap_or(0);
            let out = (enabled >= 2).then(|| majority(v(0), v(1), v(2)));
            (stick(out), false)
        }
        FuVariant::Dwc => {
            let a = stick(apply(kind, opcodes[0], width, args));
            let b = apply(kind, opcodes[1], width, args);
            (a, a != b)
        }
        FuVariant::Edc => {
            let f = decode_opcode(kind, opcodes[0]);
            let out = stick(apply(kind, opcodes[0], width, args));
            let flag = match (f, out) {
                (Function::Op(op), Some(v)) if checker != 0 => residue(v) != predict_residue(op, width, args),
                _ => false,
            };
            (out, flag)
        }
    }
}

fn residue(v: u64) -> u8 {
    (v % 3) as u8
}

/// Residue of the result predicted from operand residues, corrected with
/// the wrap count and sign carried by the extended check path.
pub fn predict_residue(op: Op, width: Width, args: &[u64]) -> u8 {
    let bits = width.bits();
    let (a, b) = (args[0] as i128, args[1] as i128);
    let (ra, rb) = ((a % 3) as i64, (b % 3) as i64);
    // 2^w mod 3.
    let p = if bits.is_multiple_of(2) { 1 } else { 2 };
    let md = |x: i64| x.rem_euclid(3);
    match op {
        Op::Add => {
            let k = ((a + b) >> bits) as i64;
            md(ra + rb - k * p) as u8
        }
        Op::Mul => {
            let k = (((a * b) >> bits) % 3) as i64;
            md(ra * rb - k * p) as u8
        }
        Op::Sub | Op::SubAbs => {
            let k = ((a - b) >> bits) as i64;
            let rd = md(ra - rb - k * p);
            if op == Op::Sub {
                return rd as u8;
            }
            let d = width.wrap(a - b);
            if d >> (bits - 1) & 1 == 1 {
                md(p - rd) as u8
            } else {
                rd as u8
            }
        }
        Op::Vote => residue(majority(args[0], args[1], args[2])),
    }
}

pub fn simulate(
    arch: &FabricArch,
    bitstream: &Bitstream,
    io: &IoBinding,
    vectors: &[Vec<u64>],
    faults: &FaultState,
) -> Result<SimResult, SimError> {
    Simulator::new(arch, io).run(bitstream, vectors, faults)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equivalence {
    Equal,
    Corrupted,
    DetectedOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub matches: Vec<bool>,
    pub flagged: bool,
    pub class: Equivalence,
}

impl EquivalenceReport {
    pub fn mismatches(&self) -> usize {
        self.matches.iter().filter(|m| !**m).count()
    }
}

/// Compares simulated outputs with the reference evaluator. Any raised flag
/// makes the run detected; otherwise any wrong word makes it corrupted.
pub fn compare_golden(result: &SimResult, dfg: &DataflowGraph, vectors: &[Vec<u64>]) -> EquivalenceReport {
    let golden: Vec<Vec<u64>> = vectors.iter().map(|v| eval_dfg(dfg, v).expect("vector shape")).collect();
    compare_expected(result, &golden)
}

pub fn compare_expected(result: &SimResult, golden: &[Vec<u64>]) -> EquivalenceReport {
    let matches: Vec<bool> = result.outputs.iter().zip(golden).map(|(a, b)| a == b).collect();
    let flagged = result.any_flag();
    let class = if flagged {
        Equivalence::DetectedOnly
    } else if matches.iter().all(|m| *m) {
        Equivalence::Equal
    } else {
        Equivalence::Corrupted
    };
    EquivalenceReport { matches, flagged, class }
}

/// Deterministic pseudo-random input vectors.
pub fn random_vectors(dfg: &DataflowGraph, count: usize, seed: u64) -> Vec<Vec<u64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mask = dfg.width.mask();
    (0..count)
        .map(|_| (0..dfg.inputs.len()).map(|_| rng.gen::<u64>() & mask).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{FabricMode, ResourceKind};
    use crate::dfg::{gen_conv, gen_sad};
    use crate::harden::{assign_hardening, minimal_fabric, size_requirements, HardeningMode};
    use crate::pnr::{compile, Compiled};
    use proptest::prelude::*;

    fn build(dfg: &DataflowGraph, mode: HardeningMode, w: usize) -> Compiled {
        let d = assign_hardening(dfg, &mode).unwrap();
        let req = size_requirements(std::slice::from_ref(dfg), &mode).unwrap();
        let factor = if mode == HardeningMode::NaiveTmr { 2 } else { 1 };
        let arch = minimal_fabric(&req.scaled(factor), mode.fabric_mode(), w, dfg.width, 2).unwrap();
        compile(&d, &arch, 1, &Default::default()).unwrap()
    }

    fn run(c: &Compiled, vectors: &[Vec<u64>], faults: &FaultState) -> SimResult {
        simulate(&c.arch, &c.bitstream, &c.io, vectors, faults).unwrap()
    }

    #[test]
    fn conv_matches_oracle() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::None, 6);
        let vectors = random_vectors(&dfg, 100, 3);
        let r = run(&c, &vectors, &FaultState::none());
        let rep = compare_golden(&r, &dfg, &vectors);
        assert_eq!(rep.class, Equivalence::Equal);
        assert_eq!(rep.mismatches(), 0);
    }

    #[test]
    fn sad_worked_example() {
        let dfg = gen_sad(2);
        let c = build(&dfg, HardeningMode::None, 6);
        let r = run(&c, &[vec![1, 2, 3, 4, 4, 3, 2, 1]], &FaultState::none());
        assert_eq!(r.outputs, vec![vec![8]]);
        assert_eq!(r.latency, 3);
        assert_eq!(r.sample_cycles, vec![3]);
    }

    #[test]
    fn tmr_replica_bits_are_masked_exhaustively() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::TmrFu, 6);
        let vectors = random_vectors(&dfg, 8, 5);
        let sim = Simulator::new(&c.arch, &c.io);
        let golden: Vec<_> = vectors.iter().map(|v| eval_dfg(&dfg, v).unwrap()).collect();
        let mut count = 0;
        for i in 0..c.layout.total_bits() {
            if matches!(c.layout.bit(i).kind, ResourceKind::FuReplica(_)) {
                let r = sim.run(&c.bitstream, &vectors, &FaultState::flip([i])).unwrap();
                assert_eq!(compare_expected(&r, &golden).class, Equivalence::Equal, "bit {i}");
                count += 1;
            }
        }
        assert_eq!(count, 3 * 4 * c.arch.cells().len());
    }

    #[test]
    fn dwc_replica_fault_is_detected() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::DwcFu, 6);
        let vectors = random_vectors(&dfg, 8, 5);
        let used = c.placement.sites[0];
        let bit = (0..c.layout.total_bits())
            .find(|&i| {
                let b = c.layout.bit(i);
                b.coord == used && b.kind == ResourceKind::FuReplica(1)
            })
            .unwrap();
        let r = run(&c, &vectors, &FaultState::flip([bit]));
        let rep = compare_golden(&r, &dfg, &vectors);
        assert_eq!(rep.class, Equivalence::DetectedOnly);
        assert!(rep.matches.iter().all(|m| *m));
    }

    #[test]
    fn routing_fault_corrupts() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::None, 6);
        let vectors = random_vectors(&dfg, 16, 5);
        // Redirect the first adder's west input to another track.
        let adder = dfg.nodes.iter().position(|n| n.op == Op::Add).unwrap();
        let at = c.placement.sites[adder];
        let field = c
            .layout
            .fields()
            .iter()
            .find(|f| f.coord == at && f.role == crate::arch::FieldRole::Pin(Pin::In(0)))
            .unwrap();
        let r = run(&c, &vectors, &FaultState::flip([field.start]));
        assert_eq!(compare_golden(&r, &dfg, &vectors).class, Equivalence::Corrupted);
    }

    #[test]
    fn plain_opcode_flip_is_visible() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::None, 6);
        let at = c.placement.sites[0];
        let field = c
            .layout
            .fields()
            .iter()
            .find(|f| f.coord == at && f.kind == ResourceKind::FuOp)
            .unwrap();
        // mul (1) -> nop-zero (3) on a vector whose product is nonzero.
        let mut v = vec![0u64; 8];
        v[0] = 3;
        v[4] = 5;
        let r = run(&c, &[v.clone()], &FaultState::flip([field.start + 1]));
        assert_eq!(compare_golden(&r, &dfg, &[v]).class, Equivalence::Corrupted);
    }

    #[test]
    fn stuck_cells_trip_checkers() {
        let dfg = gen_conv(2);
        let vectors = vec![vec![1, 2, 3, 4, 1, 1, 1, 1]];
        for mode in [HardeningMode::DwcFu, HardeningMode::EdcFu] {
            let c = build(&dfg, mode.clone(), 6);
            // m0 = 1 * 1, residue 1, so a stuck-at-0 output disagrees.
            let stuck = FaultState {
                flipped: BTreeSet::new(),
                stuck: [c.placement.sites[0]].into(),
            };
            let r = run(&c, &vectors, &stuck);
            assert!(r.any_flag(), "{mode}");
        }
        let c = build(&dfg, HardeningMode::TmrFu, 6);
        let stuck = FaultState {
            flipped: BTreeSet::new(),
            stuck: [c.placement.sites[0]].into(),
        };
        let r = run(&c, &vectors, &stuck);
        assert_eq!(r.outputs, vec![vec![9]]);
    }

    #[test]
    fn undecodable_select_is_refused() {
        let dfg = gen_conv(2);
        let c = build(&dfg, HardeningMode::None, 6);
        let at = c.placement.sites[0];
        let field = c
            .layout
            .fields()
            .iter()
            .find(|f| f.coord == at && f.role == crate::arch::FieldRole::Pin(Pin::Out))
            .unwrap();
        let mut faults = FaultState::none();
        // Select 7 on a 6-track channel.
        let sel = c.config.cell(&c.arch, at).unwrap().pin(c.arch.cell(at).unwrap(), Pin::Out);
        for b in 0..3 {
            if (sel >> b) & 1 == 0 {
                faults.flipped.insert(field.start + b);
            }
        }
        let vectors = random_vectors(&dfg, 1, 0);
        assert!(matches!(
            simulate(&c.arch, &c.bitstream, &c.io, &vectors, &faults),
            Err(SimError::Undecodable(_))
        ));
    }

    #[test]
    fn fault_free_fabric_has_no_mode_dependence() {
        let dfg = gen_conv(2);
        let plain = build(&dfg, HardeningMode::None, 6);
        let tmr = build(&dfg, HardeningMode::TmrFu, 6);
        assert_eq!(plain.placement, tmr.placement);
        assert_eq!(plain.routing, tmr.routing);
        assert_eq!(FabricMode::TmrFu, tmr.arch.mode());
    }

    proptest! {
        #[test]
        fn residue_prediction_matches_datapath(a in any::<u16>(), b in any::<u16>(), k in 0usize..4) {
            let w = Width::default();
            let op = [Op::Add, Op::Sub, Op::SubAbs, Op::Mul][k];
            let args = [a as u64, b as u64];
            prop_assert_eq!(predict_residue(op, w, &args), residue(op.apply(w, &args)));
        }

        #[test]
        fn flags_stay_low_without_faults(seed in any::<u64>()) {
            let dfg = gen_sad(2);
            for mode in [HardeningMode::DwcFu, HardeningMode::EdcFu] {
                let c = build(&dfg, mode, 6);
                let vectors = random_vectors(&dfg, 16, seed);
                let r = run(&c, &vectors, &FaultState::none());
                prop_assert!(!r.any_flag());
                prop_assert_eq!(compare_golden(&r, &dfg, &vectors).class, Equivalence::Equal);
            }
        }
    }
}
