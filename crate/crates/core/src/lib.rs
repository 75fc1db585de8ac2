//! Reliability-aware overlay fabric toolchain.
//!
//! Kernels are dataflow graphs ([`dfg`]) hardened by [`harden`], placed and
//! routed onto an island-style overlay ([`arch`], [`pnr`]), and executed by a
//! cycle simulator ([`sim`]). Reliability is measured by configuration-bit
//! injection ([`seu`]), SECDED scrubbing ([`scrub`]) and spare-based repair
//! ([`repair`]).

pub mod arch;
pub mod dfg;
pub mod harden;
pub mod pnr;
pub mod repair;
pub mod scrub;
pub mod secded;
pub mod seu;
pub mod sim;
pub mod word;

pub use arch::{parse_fabric, Bitstream, BitstreamLayout, Cell, Coord, FabricArch, FabricConfig, FabricMode, FuKind, FuVariant};
pub use dfg::{eval_dfg, gen_conv, gen_sad, gen_sobel, parse_dfg, Criticality, DataflowGraph, Op};
pub use harden::{assign_hardening, minimal_fabric, size_requirements, HardenedDesign, HardeningMode, ResourceCounts};
pub use pnr::{compile, Compiled, PnrError};
pub use repair::{dynamic_repair, precompile, Granularity, RepairPlan};
pub use scrub::{run_two_level, ScrubConfig, ScrubReport, UpsetTrace};
pub use seu::{inject, run_campaign, BitClass, DeviceModel, Scope, SensitivityMap};
pub use sim::{compare_golden, simulate, FaultState, SimResult, Simulator};
pub use word::Width;
