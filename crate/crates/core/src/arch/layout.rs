//! Canonical enumeration of overlay configuration bits.

use serde::{Deserialize, Serialize};

use super::{Cell, Coord, FabricArch, FuVariant, Pin};

/// Opcode field width of every functional-unit copy.
pub const OPCODE_BITS: u32 = 4;
/// Programmable connections per switch-box track.
pub const SWITCH_BITS: u32 = 6;

/// Resource a configuration bit belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceKind {
    FuOp,
    FuReplica(u8),
    CbSelect,
    SbSwitch,
}

impl ResourceKind {
    pub fn name(self) -> String {
        match self {
            ResourceKind::FuOp => "fu_op".into(),
            ResourceKind::FuReplica(r) => format!("fu_replica{r}"),
            ResourceKind::CbSelect => "cb_select".into(),
            ResourceKind::SbSwitch => "sb_switch".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fu_op" => Some(ResourceKind::FuOp),
            "cb_select" => Some(ResourceKind::CbSelect),
            "sb_switch" => Some(ResourceKind::SbSwitch),
            _ => {
                let r: u8 = s.strip_prefix("fu_replica")?.parse().ok()?;
                (r < 3).then_some(ResourceKind::FuReplica(r))
            }
        }
    }

    pub fn is_routing(self) -> bool {
        matches!(self, ResourceKind::CbSelect | ResourceKind::SbSwitch)
    }
}

/// What a field configures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldRole {
    Opcode { copy: u8 },
    Checker,
    Pin(Pin),
    Switch { track: u32 },
}

/// A contiguous multi-bit field, little-endian within itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub start: usize,
    pub width: u32,
    pub frame: usize,
    pub offset: usize,
    pub coord: Coord,
    pub role: FieldRole,
    pub kind: ResourceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    /// Global index of the first bit.
    pub start: usize,
    /// Payload bits excluding padding.
    pub bits: usize,
    /// 64-bit words after padding.
    pub words: usize,
}

/// Full description of one configuration bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitInfo {
    pub index: usize,
    pub frame: usize,
    pub offset: usize,
    pub kind: ResourceKind,
    pub coord: Coord,
    pub role: FieldRole,
    /// Position within its field.
    pub bit: u32,
}

/// Ordered enumeration of every configuration bit of a fabric.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitstreamLayout {
    fabric_hash: u64,
    rows: usize,
    cols: usize,
    channel_width: usize,
    select_bits: u32,
    cells: Vec<Option<Cell>>,
    frames: Vec<FrameInfo>,
    fields: Vec<Field>,
    total: usize,
}

/// Builds the canonical layout: frames are columns, tiles within a column in
/// row order, and within a tile the FU fields, then connection-box selects,
/// then switch-box tracks.
pub fn bit_layout(arch: &FabricArch) -> BitstreamLayout {
    let sel = arch.select_bits();
    let w = arch.channel_width();
    let mut fields = Vec::new();
    let mut frames = Vec::with_capacity(arch.cols());
    let mut cells = vec![None; arch.rows() * arch.cols()];
    let mut global = 0usize;
    for col in 0..arch.cols() {
        let frame = frames.len();
        let frame_start = global;
        let mut push = |global: &mut usize, coord: Coord, width: u32, role: FieldRole, kind: ResourceKind| {
            if width == 0 {
                return;
            }
            fields.push(Field {
                start: *global,
                width,
                frame,
                offset: *global - frame_start,
                coord,
                role,
                kind,
            });
            *global += width as usize;
        };
        for row in 0..arch.rows() {
            let at = Coord::new(row, col);
            if let Some(cell) = arch.cell(at) {
                cells[arch.cell_index(at)] = Some(cell);
                for copy in 0..cell.variant.opcode_copies() as u8 {
                    let kind = match cell.variant {
                        FuVariant::Tmr | FuVariant::Dwc => ResourceKind::FuReplica(copy),
                        _ => ResourceKind::FuOp,
                    };
                    push(&mut global, at, OPCODE_BITS, FieldRole::Opcode { copy }, kind);
                }
                if cell.variant.checker_bits() > 0 {
                    push(
                        &mut global,
                        at,
                        cell.variant.checker_bits() as u32,
                        FieldRole::Checker,
                        ResourceKind::FuOp,
                    );
                }
                for pin in arch.pins(cell) {
                    push(&mut global, at, sel, FieldRole::Pin(pin), ResourceKind::CbSelect);
                }
            }
            for track in 0..w as u32 {
                push(
                    &mut global,
                    at,
                    SWITCH_BITS,
                    FieldRole::Switch { track },
                    ResourceKind::SbSwitch,
                );
            }
        }
        let bits = global - frame_start;
        frames.push(FrameInfo {
            start: frame_start,
            bits,
            words: bits.div_ceil(64),
        });
    }
    BitstreamLayout {
        fabric_hash: arch.fabric_hash(),
        rows: arch.rows(),
        cols: arch.cols(),
        channel_width: w,
        select_bits: sel,
        cells,
        frames,
        fields,
        total: global,
    }
}

impl BitstreamLayout {
    pub fn fabric_hash(&self) -> u64 {
        self.fabric_hash
    }
    pub fn total_bits(&self) -> usize {
        self.total
    }
    pub fn frames(&self) -> &[FrameInfo] {
        &self.frames
    }
    pub fn fields(&self) -> &[Field] {
        &self.fields
    }
    pub fn channel_width(&self) -> usize {
        self.channel_width
    }
    pub fn select_bits(&self) -> u32 {
        self.select_bits
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, at: Coord) -> Option<Cell> {
        self.cells[at.row * self.cols + at.col]
    }

    /// Padded payload size in bits summed over frames.
    pub fn padded_bits(&self) -> usize {
        self.frames.iter().map(|f| f.words * 64).sum()
    }

    pub fn field_of(&self, index: usize) -> &Field {
        assert!(index < self.total, "bit {index} outside layout");
        let pos = self.fields.partition_point(|f| f.start <= index) - 1;
        &self.fields[pos]
    }

    pub fn bit(&self, index: usize) -> BitInfo {
        let f = self.field_of(index);
        let bit = (index - f.start) as u32;
        BitInfo {
            index,
            frame: f.frame,
            offset: f.offset + bit as usize,
            kind: f.kind,
            coord: f.coord,
            role: f.role,
            bit,
        }
    }

    /// Inverse of [`BitstreamLayout::bit`].
    pub fn global_index(&self, frame: usize, offset: usize) -> Option<usize> {
        let f = self.frames.get(frame)?;
        (offset < f.bits).then_some(f.start + offset)
    }

    /// Number of bits per resource kind.
    pub fn kind_totals(&self) -> std::collections::BTreeMap<ResourceKind, usize> {
        let mut m = std::collections::BTreeMap::new();
        for f in &self.fields {
            *m.entry(f.kind).or_insert(0) += f.width as usize;
        }
        m
    }

    pub fn pack(&self, config: &FabricConfig) -> Bits {
        let mut bits = Bits::zeros(self.total);
        for f in &self.fields {
            let at = f.coord.row * self.cols + f.coord.col;
            let value = match f.role {
                FieldRole::Switch { track } => {
                    config.switches[at * self.channel_width + track as usize] as u64
                }
                role => {
                    let cell = config.cells[at].as_ref().expect("layout cell missing from config");
                    match role {
                        FieldRole::Opcode { copy } => cell.opcodes[copy as usize] as u64,
                        FieldRole::Checker => cell.checker as u64,
                        FieldRole::Pin(pin) => cell.pins[pin_slot(self.cells[at].unwrap(), pin)] as u64,
                        FieldRole::Switch { .. } => unreachable!(),
                    }
                }
            };
            bits.write(f.start, f.width, value);
        }
        bits
    }

    pub fn unpack(&self, bits: &Bits) -> FabricConfig {
        let mut config = self.blank();
        for f in &self.fields {
            let at = f.coord.row * self.cols + f.coord.col;
            let value = bits.read(f.start, f.width);
            match f.role {
                FieldRole::Switch { track } => {
                    config.switches[at * self.channel_width + track as usize] = value as u8
                }
                role => {
                    let slot = role_slot(self.cells[at].unwrap(), role);
                    let cell = config.cells[at].as_mut().unwrap();
                    match role {
                        FieldRole::Opcode { copy } => cell.opcodes[copy as usize] = value as u8,
                        FieldRole::Checker => cell.checker = value as u8,
                        FieldRole::Pin(_) => cell.pins[slot] = value as u32,
                        FieldRole::Switch { .. } => unreachable!(),
                    }
                }
            }
        }
        config
    }

    /// All-zero configuration: every unit off, every switch open.
    pub fn blank(&self) -> FabricConfig {
        FabricConfig {
            cells: self
                .cells
                .iter()
                .map(|c| {
                    c.map(|cell| CellConfig {
                        opcodes: vec![0; cell.variant.opcode_copies()],
                        checker: 0,
                        pins: vec![0; cell.input_pins() + 1],
                    })
                })
                .collect(),
            switches: vec![0; self.rows * self.cols * self.channel_width],
        }
    }
}

fn pin_slot(cell: Cell, pin: Pin) -> usize {
    match pin {
        Pin::In(k) => k as usize,
        Pin::Out => cell.input_pins(),
    }
}

fn role_slot(cell: Cell, role: FieldRole) -> usize {
    match role {
        FieldRole::Pin(pin) => pin_slot(cell, pin),
        _ => 0,
    }
}

/// Decoded configuration of one functional-unit tile.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellConfig {
    /// One opcode per internal copy (1, 2 or 3).
    pub opcodes: Vec<u8>,
    /// Residue-checker enables (EDC cells only).
    pub checker: u8,
    /// Track selects: inputs in order, then the output.
    pub pins: Vec<u32>,
}

impl CellConfig {
    pub fn pin(&self, cell: Cell, pin: Pin) -> u32 {
        self.pins[pin_slot(cell, pin)]
    }

    pub fn set_pin(&mut self, cell: Cell, pin: Pin, track: u32) {
        self.pins[pin_slot(cell, pin)] = track;
    }
}

/// Structured overlay configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FabricConfig {
    /// Row-major; `None` where the tile has no functional unit.
    pub cells: Vec<Option<CellConfig>>,
    /// Switch masks indexed by `tile * W + track`, one bit per
    /// [`super::SWITCH_PAIRS`] entry.
    pub switches: Vec<u8>,
}

impl FabricConfig {
    pub fn cell(&self, arch: &FabricArch, at: Coord) -> Option<&CellConfig> {
        self.cells[arch.cell_index(at)].as_ref()
    }

    pub fn cell_mut(&mut self, arch: &FabricArch, at: Coord) -> Option<&mut CellConfig> {
        self.cells[arch.cell_index(at)].as_mut()
    }

    pub fn switch_mask(&self, arch: &FabricArch, at: Coord, track: usize) -> u8 {
        self.switches[arch.cell_index(at) * arch.channel_width() + track]
    }

    pub fn set_switch(&mut self, arch: &FabricArch, at: Coord, track: usize, pair: usize) {
        self.switches[arch.cell_index(at) * arch.channel_width() + track] |= 1 << pair;
    }

    /// Tiles whose units are configured with a nonzero opcode in any copy.
    pub fn active_cells<'a>(&'a self, arch: &'a FabricArch) -> impl Iterator<Item = Coord> + 'a {
        arch.coords().filter(move |&c| {
            self.cell(arch, c)
                .is_some_and(|cc| cc.opcodes.iter().any(|&o| o != 0))
        })
    }
}

/// Fixed-length bit vector addressed by global configuration index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn read(&self, start: usize, width: u32) -> u64 {
        (0..width as usize).fold(0, |acc, k| acc | ((self.get(start + k) as u64) << k))
    }

    pub fn write(&mut self, start: usize, width: u32, value: u64) {
        for k in 0..width as usize {
            self.set(start + k, (value >> k) & 1 == 1);
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_fabric;
    use proptest::prelude::*;

    #[test]
    fn single_plain_tile_budget() {
        let arch = parse_fabric("rows 1\ncols 1\nchannel_width 2\nfu 0 0 mul\n").unwrap();
        let layout = bit_layout(&arch);
        assert_eq!(layout.total_bits(), 4 + 3 + 6 * 2);
        assert_eq!(layout.frames()[0].words, 1);
        assert_eq!(layout.padded_bits(), 64);
    }

    #[test]
    fn hardened_budgets() {
        for (mode, fu_bits) in [("tmr_fu", 12), ("dwc_fu", 8), ("edc_fu", 6)] {
            let text = format!("rows 1\ncols 1\nchannel_width 4\nhardening {mode}\nfu 0 0 add\n");
            let layout = bit_layout(&parse_fabric(&text).unwrap());
            assert_eq!(layout.total_bits(), fu_bits + 3 * 2 + 6 * 4, "{mode}");
        }
        // A voter has a third input pin.
        let layout = bit_layout(&parse_fabric("rows 1\ncols 1\nchannel_width 4\nfu 0 0 vote\n").unwrap());
        assert_eq!(layout.total_bits(), 4 + 4 * 2 + 24);
        // An empty tile carries only its switch box.
        let layout = bit_layout(&parse_fabric("rows 1\ncols 1\nchannel_width 4\n").unwrap());
        assert_eq!(layout.total_bits(), 24);
    }

    #[test]
    fn frames_follow_columns() {
        let mut text = String::from("rows 4\ncols 4\nchannel_width 3\n");
        for r in 0..4 {
            for c in 0..4 {
                text.push_str(&format!("fu {r} {c} add\n"));
            }
        }
        let arch = parse_fabric(&text).unwrap();
        let layout = bit_layout(&arch);
        assert_eq!(layout.frames().len(), 4);
        assert_eq!(layout, bit_layout(&arch));
        // Column 0 holds tiles (0,0)..(3,0) before any of column 1.
        let first = layout.bit(0);
        assert_eq!((first.frame, first.coord), (0, Coord::new(0, 0)));
        let f1 = layout.frames()[1].start;
        assert_eq!(layout.bit(f1 - 1).coord, Coord::new(3, 0));
        assert_eq!(layout.bit(f1).coord, Coord::new(0, 1));
    }

    #[test]
    fn layout_is_a_bijection() {
        let text = "rows 2\ncols 3\nchannel_width 5\nhardening tmr_fu\nfu 0 0 mul\nfu 1 2 add\nfu 0 1 subabs\n";
        let arch = parse_fabric(text).unwrap();
        let layout = bit_layout(&arch);
        let mut replica = [0usize; 3];
        for i in 0..layout.total_bits() {
            let b = layout.bit(i);
            assert_eq!(layout.global_index(b.frame, b.offset), Some(i));
            if let ResourceKind::FuReplica(r) = b.kind {
                replica[r as usize] += 1;
            }
        }
        assert_eq!(replica, [12, 12, 12]);
        assert_eq!(layout.kind_totals().values().sum::<usize>(), layout.total_bits());
    }

    fn arb_config(layout: &BitstreamLayout) -> impl Strategy<Value = Bits> {
        let n = layout.total_bits();
        proptest::collection::vec(any::<bool>(), n).prop_map(move |v| {
            let mut b = Bits::zeros(n);
            for (i, x) in v.into_iter().enumerate() {
                b.set(i, x);
            }
            b
        })
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(bits in arb_config(&bit_layout(&parse_fabric(
            "rows 2\ncols 2\nchannel_width 3\nhardening mixed\nfu 0 0 mul tmr\nfu 0 1 add edc\nfu 1 0 sub dwc\n"
        ).unwrap()))) {
            let arch = parse_fabric(
                "rows 2\ncols 2\nchannel_width 3\nhardening mixed\nfu 0 0 mul tmr\nfu 0 1 add edc\nfu 1 0 sub dwc\n",
            ).unwrap();
            let layout = bit_layout(&arch);
            let config = layout.unpack(&bits);
            prop_assert_eq!(layout.pack(&config), bits);
        }
    }
}
