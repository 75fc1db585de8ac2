//! Island-style overlay fabric model.
//!
//! The fabric is a `rows × cols` grid of tiles. Each tile owns an optional
//! functional unit, the connection box binding that unit's pins to tracks,
//! and a disjoint switch box joining the four channel segments that meet at
//! the tile. Primary I/O enters and leaves through pads on the boundary
//! segments.

mod bitstream;
mod layout;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::word::Width;

pub use crate::dfg::Op as FuKind;
pub use bitstream::{decode_bitstream, encode_config, Bitstream, BitstreamError, Decoded, Frame, WordError};
pub use layout::{
    bit_layout, BitInfo, BitstreamLayout, Bits, CellConfig, FabricConfig, Field, FieldRole, FrameInfo,
    ResourceKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Self {
        Coord { row, col }
    }

    /// King-move distance.
    pub fn chebyshev(self, other: Coord) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

/// Hardened realization of a functional unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuVariant {
    #[default]
    Plain,
    /// Three internal replicas and an embedded bitwise-majority voter.
    Tmr,
    /// Two replicas and a comparator.
    Dwc,
    /// Single datapath with a mod-3 residue checker.
    Edc,
}

impl FuVariant {
    pub const ALL: [FuVariant; 4] = [FuVariant::Plain, FuVariant::Tmr, FuVariant::Dwc, FuVariant::Edc];

    /// Number of independent opcode copies held in configuration memory.
    pub fn opcode_copies(self) -> usize {
        match self {
            FuVariant::Plain | FuVariant::Edc => 1,
            FuVariant::Dwc => 2,
            FuVariant::Tmr => 3,
        }
    }

    pub fn checker_bits(self) -> usize {
        match self {
            FuVariant::Edc => 2,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FuVariant::Plain => "plain",
            FuVariant::Tmr => "tmr",
            FuVariant::Dwc => "dwc",
            FuVariant::Edc => "edc",
        }
    }

    /// Whether the cell raises a detection flag.
    pub fn has_flag(self) -> bool {
        matches!(self, FuVariant::Dwc | FuVariant::Edc)
    }
}

impl FromStr for FuVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FuVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown FU variant `{s}`"))
    }
}

impl fmt::Display for FuVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fabric-wide hardening mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FabricMode {
    #[default]
    Plain,
    TmrFu,
    DwcFu,
    EdcFu,
    Mixed,
}

impl FabricMode {
    pub fn name(self) -> &'static str {
        match self {
            FabricMode::Plain => "plain",
            FabricMode::TmrFu => "tmr_fu",
            FabricMode::DwcFu => "dwc_fu",
            FabricMode::EdcFu => "edc_fu",
            FabricMode::Mixed => "mixed",
        }
    }

    /// The variant every cell carries, or `None` for mixed fabrics.
    pub fn uniform_variant(self) -> Option<FuVariant> {
        match self {
            FabricMode::Plain => Some(FuVariant::Plain),
            FabricMode::TmrFu => Some(FuVariant::Tmr),
            FabricMode::DwcFu => Some(FuVariant::Dwc),
            FabricMode::EdcFu => Some(FuVariant::Edc),
            FabricMode::Mixed => None,
        }
    }
}

impl FromStr for FabricMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            FabricMode::Plain,
            FabricMode::TmrFu,
            FabricMode::DwcFu,
            FabricMode::EdcFu,
            FabricMode::Mixed,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown hardening mode `{s}`"))
    }
}

impl fmt::Display for FabricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A functional-unit site: what it computes and how it is hardened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub kind: FuKind,
    pub variant: FuVariant,
}

impl Cell {
    pub fn new(kind: FuKind, variant: FuVariant) -> Self {
        Cell { kind, variant }
    }

    pub fn input_pins(self) -> usize {
        self.kind.arity()
    }

    /// Whether a node with `op` can execute on this cell's datapath.
    pub fn supports(self, op: FuKind) -> bool {
        self.kind == op || (self.kind == FuKind::SubAbs && op == FuKind::Sub)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.variant == FuVariant::Plain {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{}:{}", self.variant, self.kind)
        }
    }
}

/// Opcode selecting `op`. Zero is reserved for "off".
pub fn opcode(op: FuKind) -> u8 {
    match op {
        FuKind::Mul => 1,
        FuKind::Add => 2,
        FuKind::Sub => 3,
        FuKind::SubAbs => 4,
        FuKind::Vote => 5,
    }
}

/// What a unit of `kind` does with opcode `code`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Function {
    /// Not driving its output.
    Off,
    Op(FuKind),
    /// Out-of-range encoding: drives 0.
    NopZero,
}

pub fn decode_opcode(kind: FuKind, code: u8) -> Function {
    if code == 0 {
        return Function::Off;
    }
    let valid = match kind {
        FuKind::SubAbs => matches!(code, 3 | 4),
        k => code == opcode(k),
    };
    if !valid {
        return Function::NopZero;
    }
    match code {
        1 => Function::Op(FuKind::Mul),
        2 => Function::Op(FuKind::Add),
        3 => Function::Op(FuKind::Sub),
        4 => Function::Op(FuKind::SubAbs),
        _ => Function::Op(FuKind::Vote),
    }
}

/// Pin of a functional unit. Input `k` reads a fixed channel segment of the
/// tile; the output drives the east segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pin {
    In(u8),
    Out,
}

/// Side of a switch box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    North,
    East,
    South,
    West,
}

/// The six programmable connections of one disjoint switch-box track, in
/// configuration-bit order.
pub const SWITCH_PAIRS: [(Side, Side); 6] = [
    (Side::North, Side::East),
    (Side::North, Side::South),
    (Side::North, Side::West),
    (Side::East, Side::South),
    (Side::East, Side::West),
    (Side::South, Side::West),
];

/// Where a pad sits on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pad {
    pub wire: usize,
    pub track: usize,
    /// Position in tile coordinates `(x, y)` used by the placer; boundary
    /// pads sit one step outside the grid.
    pub x: i64,
    pub y: i64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate cell at ({row}, {col})")]
    DuplicateCell { line: usize, row: usize, col: usize },
    #[error("line {line}: cell ({row}, {col}) outside the {rows}x{cols} grid")]
    OutOfBounds {
        line: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("channel width must be at least 1")]
    ZeroChannelWidth,
    #[error("grid must have at least one row and one column")]
    EmptyGrid,
    #[error("missing `{0}` line")]
    Missing(&'static str),
    #[error("cell ({row}, {col}): {msg}")]
    BadCell { row: usize, col: usize, msg: String },
}

/// The overlay architecture: grid, interconnect and functional-unit inventory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricArch {
    name: String,
    rows: usize,
    cols: usize,
    channel_width: usize,
    data_width: Width,
    mode: FabricMode,
    separation: usize,
    cells: BTreeMap<Coord, Cell>,
}

impl FabricArch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        channel_width: usize,
        data_width: Width,
        mode: FabricMode,
        separation: usize,
        cells: BTreeMap<Coord, Cell>,
    ) -> Result<Self, ArchError> {
        if rows == 0 || cols == 0 {
            return Err(ArchError::EmptyGrid);
        }
        if channel_width == 0 {
            return Err(ArchError::ZeroChannelWidth);
        }
        for (&c, &cell) in &cells {
            if c.row >= rows || c.col >= cols {
                return Err(ArchError::OutOfBounds {
                    line: 0,
                    row: c.row,
                    col: c.col,
                    rows,
                    cols,
                });
            }
            let bad = |msg: &str| ArchError::BadCell {
                row: c.row,
                col: c.col,
                msg: msg.to_string(),
            };
            if cell.kind == FuKind::Vote {
                if mode != FabricMode::Plain || cell.variant != FuVariant::Plain {
                    return Err(bad("vote cells only exist in plain fabrics built for naive TMR"));
                }
            } else if let Some(v) = mode.uniform_variant() {
                if cell.variant != v {
                    return Err(bad(&format!("variant {} in a {} fabric", cell.variant, mode)));
                }
            }
        }
        Ok(FabricArch {
            name: name.into(),
            rows,
            cols,
            channel_width,
            data_width,
            mode,
            separation,
            cells,
        })
    }

    /// Smallest square-ish grid holding `cells` in the given order, filled
    /// row-major.
    pub fn enclosing(
        name: impl Into<String>,
        cells: &[Cell],
        channel_width: usize,
        data_width: Width,
        mode: FabricMode,
        separation: usize,
    ) -> Result<Self, ArchError> {
        let n = cells.len().max(1);
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let map = cells
            .iter()
            .enumerate()
            .map(|(i, &cell)| (Coord::new(i / cols, i % cols), cell))
            .collect();
        FabricArch::new(name, rows, cols, channel_width, data_width, mode, separation, map)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn channel_width(&self) -> usize {
        self.channel_width
    }
    pub fn data_width(&self) -> Width {
        self.data_width
    }
    pub fn mode(&self) -> FabricMode {
        self.mode
    }
    pub fn separation(&self) -> usize {
        self.separation
    }
    pub fn cells(&self) -> &BTreeMap<Coord, Cell> {
        &self.cells
    }
    pub fn cell(&self, c: Coord) -> Option<Cell> {
        self.cells.get(&c).copied()
    }

    pub fn with_separation(mut self, separation: usize) -> Self {
        self.separation = separation;
        self
    }

    pub fn with_channel_width(mut self, w: usize) -> Result<Self, ArchError> {
        if w == 0 {
            return Err(ArchError::ZeroChannelWidth);
        }
        self.channel_width = w;
        Ok(self)
    }

    pub fn cell_index(&self, c: Coord) -> usize {
        c.row * self.cols + c.col
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Coord::new(r, c)))
    }

    /// Inventory of cells per (kind, variant).
    pub fn inventory(&self) -> BTreeMap<Cell, usize> {
        let mut inv = BTreeMap::new();
        for cell in self.cells.values() {
            *inv.entry(*cell).or_insert(0) += 1;
        }
        inv
    }

    /// Bits per connection-box select: `ceil(log2(W))`.
    pub fn select_bits(&self) -> u32 {
        usize::BITS - (self.channel_width - 1).leading_zeros()
    }

    /// Stable 64-bit identity of the architecture, stored in bitstream headers.
    pub fn fabric_hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(b)
    }

    // Routing geometry. Horizontal segment `H(r, k)` lies in row `r` between
    // the switch boxes of tiles `(r, k-1)` and `(r, k)`; vertical segment
    // `V(k, c)` lies in column `c` between tiles `(k-1, c)` and `(k, c)`.

    pub fn h_wire(&self, row: usize, k: usize) -> usize {
        row * (self.cols + 1) + k
    }

    pub fn v_wire(&self, k: usize, col: usize) -> usize {
        self.rows * (self.cols + 1) + k * self.cols + col
    }

    pub fn wire_count(&self) -> usize {
        self.rows * (self.cols + 1) + (self.rows + 1) * self.cols
    }

    /// Routing-resource node count: one per (segment, track).
    pub fn rr_node_count(&self) -> usize {
        self.wire_count() * self.channel_width
    }

    pub fn rr_node(&self, wire: usize, track: usize) -> usize {
        wire * self.channel_width + track
    }

    pub fn sb_wire(&self, at: Coord, side: Side) -> usize {
        match side {
            Side::North => self.v_wire(at.row, at.col),
            Side::South => self.v_wire(at.row + 1, at.col),
            Side::West => self.h_wire(at.row, at.col),
            Side::East => self.h_wire(at.row, at.col + 1),
        }
    }

    pub fn pin_wire(&self, at: Coord, pin: Pin) -> usize {
        match pin {
            Pin::In(0) => self.sb_wire(at, Side::West),
            Pin::In(1) => self.sb_wire(at, Side::North),
            Pin::In(_) => self.sb_wire(at, Side::South),
            Pin::Out => self.sb_wire(at, Side::East),
        }
    }

    pub fn pins(&self, cell: Cell) -> impl Iterator<Item = Pin> {
        (0..cell.input_pins() as u8).map(Pin::In).chain(std::iter::once(Pin::Out))
    }

    fn pad(&self, k: usize, output: bool) -> Option<Pad> {
        let w = self.channel_width;
        let perim = self.rows + self.cols;
        if k >= perim * w {
            return None;
        }
        let track = k % w;
        let slot = (track * perim / w + k / w) % perim;
        let (wire, x, y) = if slot < self.rows {
            let r = slot;
            if output {
                (self.h_wire(r, self.cols), self.cols as i64, r as i64)
            } else {
                (self.h_wire(r, 0), -1, r as i64)
            }
        } else {
            let c = slot - self.rows;
            if output {
                (self.v_wire(self.rows, c), c as i64, self.rows as i64)
            } else {
                (self.v_wire(0, c), c as i64, -1)
            }
        };
        Some(Pad { wire, track, x, y })
    }

    /// Source pad `k` on the west/north boundary.
    pub fn input_pad(&self, k: usize) -> Option<Pad> {
        self.pad(k, false)
    }

    /// Sink pad `k` on the east/south boundary.
    pub fn output_pad(&self, k: usize) -> Option<Pad> {
        self.pad(k, true)
    }

    /// Canonical `.fab` text. Round-trips through [`parse_fabric`].
    pub fn to_text(&self) -> String {
        use fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "fabric {}", self.name);
        let _ = writeln!(s, "rows {}", self.rows);
        let _ = writeln!(s, "cols {}", self.cols);
        let _ = writeln!(s, "channel_width {}", self.channel_width);
        let _ = writeln!(s, "data_width {}", self.data_width);
        let _ = writeln!(s, "hardening {}", self.mode);
        let _ = writeln!(s, "separation {}", self.separation);
        for (c, cell) in &self.cells {
            if self.mode == FabricMode::Mixed && cell.kind != FuKind::Vote {
                let _ = writeln!(s, "fu {} {} {} {}", c.row, c.col, cell.kind, cell.variant);
            } else {
                let _ = writeln!(s, "fu {} {} {}", c.row, c.col, cell.kind);
            }
        }
        s
    }
}

/// Electrical connectivity of configured switch boxes: a representative
/// routing node for every routing node. Segments joined through ON switches
/// share a representative.
pub fn switch_components(arch: &FabricArch, config: &FabricConfig) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..arch.rr_node_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for at in arch.coords() {
        for track in 0..arch.channel_width() {
            let mask = config.switch_mask(arch, at, track);
            if mask == 0 {
                continue;
            }
            for (pair, &(s1, s2)) in SWITCH_PAIRS.iter().enumerate() {
                if mask & (1 << pair) != 0 {
                    let a = find(&mut parent, arch.rr_node(arch.sb_wire(at, s1), track));
                    let b = find(&mut parent, arch.rr_node(arch.sb_wire(at, s2), track));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    (0..parent.len()).map(|x| find(&mut parent, x)).collect()
}

/// Parses a `.fab` fabric description.
pub fn parse_fabric(text: &str) -> Result<FabricArch, ArchError> {
    let mut name = String::from("fabric");
    let mut rows = None;
    let mut cols = None;
    let mut channel_width = 8usize;
    let mut data_width = Width::default();
    let mut mode = FabricMode::Plain;
    let mut separation = 2usize;
    let mut fus: Vec<(usize, Coord, FuKind, Option<FuVariant>)> = Vec::new();

    let syntax = |line: usize, msg: String| ArchError::Syntax { line, msg };
    let number = |line: usize, toks: &[&str]| -> Result<usize, ArchError> {
        if toks.len() != 2 {
            return Err(syntax(line, format!("expected `{} <n>`", toks[0])));
        }
        toks[1]
            .parse()
            .map_err(|_| syntax(line, format!("`{}` is not a non-negative integer", toks[1])))
    };

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "fabric" => {
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `fabric <name>`".into()));
                }
                name = toks[1].to_string();
            }
            "rows" => rows = Some(number(line, &toks)?),
            "cols" => cols = Some(number(line, &toks)?),
            "channel_width" => channel_width = number(line, &toks)?,
            "data_width" => {
                let bits = number(line, &toks)?;
                data_width = u32::try_from(bits)
                    .ok()
                    .and_then(Width::new)
                    .ok_or_else(|| syntax(line, "data_width must be 8, 16 or 32".into()))?;
            }
            "hardening" => {
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `hardening <mode>`".into()));
                }
                mode = toks[1].parse().map_err(|m| syntax(line, m))?;
            }
            "separation" => separation = number(line, &toks)?,
            "fu" => {
                if !(4..=5).contains(&toks.len()) {
                    return Err(syntax(line, "expected `fu <row> <col> <kind> [<variant>]`".into()));
                }
                let row = number(line, &toks[0..2])?;
                let col = number(line, &[toks[0], toks[2]])?;
                let kind: FuKind = toks[3].parse().map_err(|m| syntax(line, m))?;
                let variant = match toks.get(4) {
                    Some(v) => Some(v.parse().map_err(|m| syntax(line, m))?),
                    None => None,
                };
                fus.push((line, Coord::new(row, col), kind, variant));
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let rows = rows.ok_or(ArchError::Missing("rows"))?;
    let cols = cols.ok_or(ArchError::Missing("cols"))?;
    if channel_width == 0 {
        return Err(ArchError::ZeroChannelWidth);
    }
    let mut cells = BTreeMap::new();
    for (line, at, kind, variant) in fus {
        if at.row >= rows || at.col >= cols {
            return Err(ArchError::OutOfBounds {
                line,
                row: at.row,
                col: at.col,
                rows,
                cols,
            });
        }
        let variant = match (variant, mode.uniform_variant()) {
            (Some(v), _) => v,
            (None, Some(v)) if kind != FuKind::Vote => v,
            (None, _) if kind == FuKind::Vote => FuVariant::Plain,
            (None, _) => {
                return Err(syntax(line, "mixed fabrics need an explicit FU variant".into()));
            }
        };
        if cells.insert(at, Cell::new(kind, variant)).is_some() {
            return Err(ArchError::DuplicateCell {
                line,
                row: at.row,
                col: at.col,
            });
        }
    }
    FabricArch::new(name, rows, cols, channel_width, data_width, mode, separation, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_text(rows: usize, cols: usize, extra: &str) -> String {
        let mut s = format!("fabric t\nrows {rows}\ncols {cols}\nchannel_width 4\n{extra}");
        for r in 0..rows {
            for c in 0..cols {
                s.push_str(&format!("fu {r} {c} mul\n"));
            }
        }
        s
    }

    #[test]
    fn parses_4x4_grid() {
        let arch = parse_fabric(&grid_text(4, 4, "")).unwrap();
        assert_eq!((arch.rows(), arch.cols()), (4, 4));
        assert_eq!(arch.cells().len(), 16);
        assert_eq!(arch.separation(), 2);
        assert_eq!(arch.data_width().bits(), 16);
        assert_eq!(parse_fabric(&arch.to_text()).unwrap(), arch);
    }

    #[test]
    fn duplicate_cell_rejected() {
        let err = parse_fabric("rows 2\ncols 2\nfu 0 0 mul\nfu 0 0 mul\n").unwrap_err();
        assert_eq!(
            err,
            ArchError::DuplicateCell {
                line: 4,
                row: 0,
                col: 0
            }
        );
    }

    #[test]
    fn zero_channel_width_rejected() {
        let err = parse_fabric("rows 1\ncols 1\nchannel_width 0\n").unwrap_err();
        assert_eq!(err, ArchError::ZeroChannelWidth);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let err = parse_fabric("rows 2\ncols 2\nfu 2 0 add\n").unwrap_err();
        assert!(matches!(err, ArchError::OutOfBounds { line: 3, row: 2, .. }));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            parse_fabric("rows 2\ncols x\n"),
            Err(ArchError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_fabric("rows 2\ncols 2\nfu 0 0 div\n"),
            Err(ArchError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            parse_fabric("rows 2\ncols 2\ndata_width 12\n"),
            Err(ArchError::Syntax { line: 3, .. })
        ));
        assert_eq!(parse_fabric("cols 2\n"), Err(ArchError::Missing("rows")));
    }

    #[test]
    fn vote_cells_only_in_plain_fabrics() {
        assert!(parse_fabric("rows 1\ncols 1\nfu 0 0 vote\n").is_ok());
        assert!(matches!(
            parse_fabric("rows 1\ncols 1\nhardening tmr_fu\nfu 0 0 vote\n"),
            Err(ArchError::BadCell { .. })
        ));
    }

    #[test]
    fn mixed_fabric_variants() {
        let arch = parse_fabric("rows 1\ncols 2\nhardening mixed\nfu 0 0 mul tmr\nfu 0 1 add edc\n").unwrap();
        assert_eq!(arch.cell(Coord::new(0, 0)).unwrap().variant, FuVariant::Tmr);
        assert_eq!(parse_fabric(&arch.to_text()).unwrap(), arch);
        assert!(parse_fabric("rows 1\ncols 1\nhardening mixed\nfu 0 0 mul\n").is_err());
        assert!(parse_fabric("rows 1\ncols 1\nhardening tmr_fu\nfu 0 0 mul dwc\n").is_err());
    }

    #[test]
    fn select_bits_is_ceil_log2() {
        let arch = parse_fabric("rows 1\ncols 1\n").unwrap();
        let sel = |w| arch.clone().with_channel_width(w).unwrap().select_bits();
        assert_eq!([sel(1), sel(2), sel(3), sel(4), sel(5), sel(8), sel(9)], [0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn pads_are_distinct_nodes() {
        let arch = parse_fabric(&grid_text(3, 4, "")).unwrap();
        let total = (arch.rows() + arch.cols()) * arch.channel_width();
        let mut seen = std::collections::HashSet::new();
        for k in 0..total {
            let p = arch.input_pad(k).unwrap();
            assert!(seen.insert(arch.rr_node(p.wire, p.track)));
            let q = arch.output_pad(k).unwrap();
            assert!(seen.insert(arch.rr_node(q.wire, q.track)));
        }
        assert!(arch.input_pad(total).is_none());
        // Consecutive sources land on different tracks.
        assert_ne!(arch.input_pad(0).unwrap().track, arch.input_pad(1).unwrap().track);
    }

    #[test]
    fn enclosing_is_square_ish() {
        let cells = vec![Cell::new(FuKind::Mul, FuVariant::Tmr); 11];
        let arch = FabricArch::enclosing("e", &cells, 4, Width::default(), FabricMode::TmrFu, 0).unwrap();
        assert_eq!((arch.rows(), arch.cols()), (3, 4));
        assert_eq!(arch.cells().len(), 11);
        assert!(arch.cell(Coord::new(2, 3)).is_none());
    }

    #[test]
    fn hash_tracks_contents() {
        let a = parse_fabric(&grid_text(2, 2, "")).unwrap();
        let b = parse_fabric(&grid_text(2, 2, "separation 3\n")).unwrap();
        assert_eq!(a.fabric_hash(), a.clone().fabric_hash());
        assert_ne!(a.fabric_hash(), b.fabric_hash());
    }
}
