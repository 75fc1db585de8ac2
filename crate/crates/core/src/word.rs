//! Fixed-width two's-complement words shared by the reference evaluator and
//! the fabric simulator.

use serde::{Deserialize, Serialize};

/// Datapath width in bits. Values are carried as `u64` masked to the width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Width(u32);

impl Width {
    pub const SUPPORTED: [u32; 3] = [8, 16, 32];

    pub fn new(bits: u32) -> Option<Self> {
        Self::SUPPORTED.contains(&bits).then_some(Width(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn mask(self) -> u64 {
        (1u64 << self.0) - 1
    }

    pub fn truncate(self, v: u64) -> u64 {
        v & self.mask()
    }

    /// Wraps an arbitrary integer into the word range.
    pub fn wrap(self, v: i128) -> u64 {
        (v as u64) & self.mask()
    }

    /// Encodes a signed constant as a word.
    pub fn from_signed(self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    pub fn to_signed(self, v: u64) -> i64 {
        let shift = 64 - self.0;
        (((v & self.mask()) << shift) as i64) >> shift
    }
}

impl Default for Width {
    fn default() -> Self {
        Width(16)
    }
}

impl std::fmt::Display for Width {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bitwise majority of three words.
pub fn majority(a: u64, b: u64, c: u64) -> u64 {
    (a & b) | (a & c) | (b & c)
}
