//! Synthetic device underneath the overlay.
//!
//! Each overlay tile is implemented by a block of device bits: the static
//! logic of its functional unit (sized by a fixed cost table), one static bit
//! per connection-box and switch-box configuration bit, and one storage bit
//! per overlay configuration bit. Blocks of an overlay column are spread over
//! `factor` device frames.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BitClass, SensitivityMap};
use crate::arch::{bit_layout, BitstreamLayout, Cell, Coord, FabricArch, FabricConfig, FieldRole, FuVariant, ResourceKind};
use crate::dfg::Op;
use crate::pnr::Compiled;

pub const DEFAULT_FRAME_FACTOR: usize = 10;

/// Device bits of the static logic of one functional unit.
pub fn static_cost(cell: Cell) -> usize {
    let base = match cell.kind {
        Op::Mul => 600,
        Op::Add | Op::Sub => 150,
        Op::SubAbs => 180,
        Op::Vote => 60,
    };
    match cell.variant {
        FuVariant::Plain => base,
        FuVariant::Tmr => 3 * base + 60,
        FuVariant::Dwc => 2 * base + 60,
        FuVariant::Edc => base + 60,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceResource {
    FuLogic,
    CbLogic,
    SbLogic,
    /// Storage cell holding one overlay configuration bit.
    OverlayConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceBit {
    pub frame: usize,
    pub offset: usize,
    pub coord: Coord,
    pub resource: DeviceResource,
    /// Static logic carrying part of the mapped design.
    pub essential: bool,
    pub overlay_bit: Option<usize>,
}

/// Overlay resources a mapped design occupies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub cells: BTreeSet<Coord>,
    /// Overlay configuration bits of used connection-box selects and of
    /// switches that are on.
    pub routing_bits: BTreeSet<usize>,
}

impl ResourceUsage {
    pub fn from_compiled(c: &Compiled) -> Self {
        Self::with_cells(&c.layout, &c.config, c.placement.used())
    }

    /// Usage read back from a configuration: every tile with a nonzero
    /// opcode counts as used.
    pub fn from_config(arch: &FabricArch, layout: &BitstreamLayout, config: &FabricConfig) -> Self {
        Self::with_cells(layout, config, config.active_cells(arch).collect())
    }

    fn with_cells(layout: &BitstreamLayout, config: &FabricConfig, cells: BTreeSet<Coord>) -> Self {
        let payload = layout.pack(config);
        let mut routing_bits = BTreeSet::new();
        for f in layout.fields() {
            let bits = f.start..f.start + f.width as usize;
            match f.role {
                FieldRole::Pin(_) if cells.contains(&f.coord) => routing_bits.extend(bits),
                FieldRole::Switch { .. } => routing_bits.extend(bits.filter(|&b| payload.get(b))),
                _ => {}
            }
        }
        ResourceUsage { cells, routing_bits }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub factor: usize,
    pub overlay_frames: usize,
    /// Payload bits of each device frame.
    pub frame_bits: Vec<usize>,
    pub bits: Vec<DeviceBit>,
    /// Device bit holding each overlay configuration bit.
    pub overlay_map: Vec<usize>,
}

impl DeviceModel {
    pub fn frame_count(&self) -> usize {
        self.frame_bits.len()
    }

    pub fn total_bits(&self) -> usize {
        self.bits.len()
    }

    pub fn essential_bits(&self) -> usize {
        self.bits.iter().filter(|b| b.essential).count()
    }

    /// Device frames holding at least one essential bit.
    pub fn essential_frames(&self) -> BTreeSet<usize> {
        self.bits.iter().filter(|b| b.essential).map(|b| b.frame).collect()
    }

    pub fn bits_of(&self, resource: DeviceResource) -> usize {
        self.bits.iter().filter(|b| b.resource == resource).count()
    }
}

/// Builds the device model of `arch` with `factor` device frames per overlay
/// frame, marking the static logic of `usage` as essential.
pub fn build_device_model(arch: &FabricArch, usage: &ResourceUsage, factor: usize) -> DeviceModel {
    let factor = factor.max(1);
    let layout = bit_layout(arch);
    let mut bits = Vec::new();
    let mut overlay_map = vec![0; layout.total_bits()];
    let mut frame_bits = Vec::new();
    for col in 0..arch.cols() {
        let mut column = Vec::new();
        for row in 0..arch.rows() {
            tile_block(arch, &layout, usage, Coord::new(row, col), &mut column);
        }
        let chunk = column.len().div_ceil(factor).max(1);
        for k in 0..factor {
            let lo = (k * chunk).min(column.len());
            let hi = ((k + 1) * chunk).min(column.len());
            let frame = frame_bits.len();
            frame_bits.push(hi - lo);
            for (offset, (coord, resource, essential, overlay_bit)) in column[lo..hi].iter().copied().enumerate() {
                if let Some(o) = overlay_bit {
                    overlay_map[o] = bits.len();
                }
                bits.push(DeviceBit {
                    frame,
                    offset,
                    coord,
                    resource,
                    essential,
                    overlay_bit,
                });
            }
        }
    }
    DeviceModel {
        factor,
        overlay_frames: layout.frames().len(),
        frame_bits,
        bits,
        overlay_map,
    }
}

type Slot = (Coord, DeviceResource, bool, Option<usize>);

fn tile_block(arch: &FabricArch, layout: &BitstreamLayout, usage: &ResourceUsage, at: Coord, out: &mut Vec<Slot>) {
    if let Some(cell) = arch.cell(at) {
        let used = usage.cells.contains(&at);
        out.extend(std::iter::repeat_n((at, DeviceResource::FuLogic, used, None), static_cost(cell)));
    }
    let fields: Vec<_> = layout.fields().iter().filter(|f| f.coord == at).collect();
    for (kind, resource) in [
        (ResourceKind::CbSelect, DeviceResource::CbLogic),
        (ResourceKind::SbSwitch, DeviceResource::SbLogic),
    ] {
        for f in fields.iter().filter(|f| f.kind == kind) {
            for b in f.start..f.start + f.width as usize {
                out.push((at, resource, usage.routing_bits.contains(&b), None));
            }
        }
    }
    for f in &fields {
        for b in f.start..f.start + f.width as usize {
            out.push((at, DeviceResource::OverlayConfig, false, Some(b)));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerReport {
    pub classes: Vec<BitClass>,
    pub totals: BTreeMap<BitClass, usize>,
    pub essential_static: usize,
}

/// Classifies every device bit: essential static logic is conservatively
/// sensitive, other static logic benign, and overlay storage bits inherit the
/// overlay campaign's class. Storage bits the campaign did not cover are
/// treated as sensitive.
pub fn lower_sensitivity(model: &DeviceModel, upper: &SensitivityMap) -> LowerReport {
    let classes: Vec<BitClass> = model
        .bits
        .iter()
        .map(|b| match b.overlay_bit {
            Some(o) => upper.class_of(o).unwrap_or(BitClass::Sdc),
            None if b.essential => BitClass::Sdc,
            None => BitClass::Benign,
        })
        .collect();
    let mut totals: BTreeMap<BitClass, usize> = BitClass::ALL.iter().map(|c| (*c, 0)).collect();
    for c in &classes {
        *totals.get_mut(c).unwrap() += 1;
    }
    LowerReport {
        classes,
        totals,
        essential_static: model.essential_bits(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::FabricMode;
    use crate::dfg::gen_conv;
    use crate::harden::{assign_hardening, HardeningMode};
    use crate::pnr::compile;
    use crate::seu::{run_campaign, Scope};
    use crate::sim::random_vectors;

    fn conv_on_4x4() -> Compiled {
        let dfg = gen_conv(2);
        let kinds = [
            [Op::Mul; 4],
            [Op::Add; 4],
            [Op::SubAbs; 4],
            [Op::Mul, Op::Add, Op::SubAbs, Op::Mul],
        ];
        let map = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| (Coord::new(r, c), Cell::new(kinds[r][c], FuVariant::Tmr)))
            .collect();
        let arch = FabricArch::new("f4", 4, 4, 6, dfg.width, FabricMode::TmrFu, 2, map).unwrap();
        let d = assign_hardening(&dfg, &HardeningMode::TmrFu).unwrap();
        compile(&d, &arch, 0, &Default::default()).unwrap()
    }

    #[test]
    fn cost_table() {
        assert_eq!(static_cost(Cell::new(Op::Mul, FuVariant::Plain)), 600);
        assert_eq!(static_cost(Cell::new(Op::Add, FuVariant::Plain)), 150);
        assert_eq!(static_cost(Cell::new(Op::SubAbs, FuVariant::Plain)), 180);
        assert_eq!(static_cost(Cell::new(Op::Vote, FuVariant::Plain)), 60);
        assert_eq!(static_cost(Cell::new(Op::Mul, FuVariant::Tmr)), 1860);
    }

    #[test]
    fn empty_usage_is_all_benign() {
        let c = conv_on_4x4();
        let model = build_device_model(&c.arch, &ResourceUsage::default(), DEFAULT_FRAME_FACTOR);
        assert_eq!(model.essential_bits(), 0);
        assert!(model.bits.iter().filter(|b| b.overlay_bit.is_none()).all(|b| !b.essential));
    }

    #[test]
    fn essential_bits_follow_usage() {
        let c = conv_on_4x4();
        let usage = ResourceUsage::from_compiled(&c);
        assert_eq!(usage.cells.len(), 7);
        let model = build_device_model(&c.arch, &usage, DEFAULT_FRAME_FACTOR);
        let cells: usize = usage.cells.iter().map(|&at| static_cost(c.arch.cell(at).unwrap())).sum();
        // 4 tmr muls and 3 tmr adders.
        assert_eq!(cells, 4 * 1860 + 3 * 510);
        assert_eq!(model.essential_bits(), cells + usage.routing_bits.len());
        assert!(model.frame_count() >= 10 * c.layout.frames().len());
        // Overlay bits map one to one onto storage bits.
        let mapped: BTreeSet<usize> = model.overlay_map.iter().copied().collect();
        assert_eq!(mapped.len(), c.layout.total_bits());
        for (o, &d) in model.overlay_map.iter().enumerate() {
            assert_eq!(model.bits[d].overlay_bit, Some(o));
        }
    }

    #[test]
    fn usage_reads_back_from_config() {
        let c = conv_on_4x4();
        assert_eq!(ResourceUsage::from_config(&c.arch, &c.layout, &c.config), ResourceUsage::from_compiled(&c));
    }

    #[test]
    fn lower_classes_inherit_upper_map() {
        let c = conv_on_4x4();
        let dfg = gen_conv(2);
        let vectors = random_vectors(&dfg, 8, 0);
        let upper = run_campaign(&c.arch, &c.bitstream, &c.io, &dfg, &vectors, &Scope::All, 0, 0).unwrap();
        let model = build_device_model(&c.arch, &ResourceUsage::from_compiled(&c), DEFAULT_FRAME_FACTOR);
        let lower = lower_sensitivity(&model, &upper);
        for r in &upper.records {
            assert_eq!(lower.classes[model.overlay_map[r.bit_index]], r.class);
        }
        let static_sdc = model
            .bits
            .iter()
            .zip(&lower.classes)
            .filter(|(b, c)| b.overlay_bit.is_none() && **c == BitClass::Sdc)
            .count();
        assert_eq!(static_sdc, model.essential_bits());
        assert_eq!(lower, lower_sensitivity(&model, &upper));
        assert_eq!(c.arch.mode(), FabricMode::TmrFu);
    }
}
