//! Extended Hamming (72,64) single-error-correct / double-error-detect code.
//!
//! Data bits occupy the non-power-of-two codeword positions 3..=71; check bit
//! `i` (0..7) covers every position with bit `i` set. Bit 7 of the check byte
//! is overall parity over the data and the seven Hamming bits.

use serde::{Deserialize, Serialize};

/// Outcome of checking one 64-bit word against its check byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Syndrome {
    Clean,
    /// One data bit flipped at this offset within the word.
    DataBit(u32),
    /// One check bit flipped (0..8).
    CheckBit(u32),
    /// Two bits flipped (or a pattern that cannot be located).
    Uncorrectable,
}

struct Tables {
    /// Data bits covered by each Hamming check bit.
    masks: [u64; 7],
    /// Codeword position of each data bit.
    positions: [u8; 64],
    /// Data bit at each codeword position, or 0xff.
    data_at: [u8; 128],
}

const fn build_tables() -> Tables {
    let mut positions = [0u8; 64];
    let mut data_at = [0xffu8; 128];
    let mut masks = [0u64; 7];
    let mut pos = 1u32;
    let mut bit = 0usize;
    while bit < 64 {
        if !pos.is_power_of_two() {
            positions[bit] = pos as u8;
            data_at[pos as usize] = bit as u8;
            let mut i = 0;
            while i < 7 {
                if pos & (1 << i) != 0 {
                    masks[i] |= 1u64 << bit;
                }
                i += 1;
            }
            bit += 1;
        }
        pos += 1;
    }
    Tables {
        masks,
        positions,
        data_at,
    }
}

static TABLES: Tables = build_tables();

fn hamming_bits(word: u64) -> u8 {
    let mut check = 0u8;
    for (i, mask) in TABLES.masks.iter().enumerate() {
        check |= (((word & mask).count_ones() & 1) as u8) << i;
    }
    check
}

/// Computes the 8 check bits of a payload word.
pub fn encode(word: u64) -> u8 {
    let hamming = hamming_bits(word);
    let parity = (word.count_ones() + hamming.count_ones()) & 1;
    hamming | ((parity as u8) << 7)
}

/// Locates errors in a stored (word, check) pair. Never modifies anything.
pub fn check(word: u64, stored: u8) -> Syndrome {
    let syndrome = (hamming_bits(word) ^ stored) & 0x7f;
    let parity_odd = (word.count_ones() + stored.count_ones()) & 1 == 1;
    match (syndrome, parity_odd) {
        (0, false) => Syndrome::Clean,
        (0, true) => Syndrome::CheckBit(7),
        (_, false) => Syndrome::Uncorrectable,
        (s, true) => {
            if s.is_power_of_two() {
                Syndrome::CheckBit(s.trailing_zeros())
            } else {
                match TABLES.data_at[s as usize] {
                    0xff => Syndrome::Uncorrectable,
                    bit => Syndrome::DataBit(bit as u32),
                }
            }
        }
    }
}

/// Applies a correction in place. Returns `false` for uncorrectable words.
pub fn correct(word: &mut u64, stored: &mut u8) -> bool {
    match check(*word, *stored) {
        Syndrome::Clean => true,
        Syndrome::DataBit(b) => {
            *word ^= 1u64 << b;
            true
        }
        Syndrome::CheckBit(b) => {
            *stored ^= 1u8 << b;
            true
        }
        Syndrome::Uncorrectable => false,
    }
}

/// Codeword position of a data bit (test support and diagnostics).
pub fn data_position(bit: u32) -> u32 {
    TABLES.positions[bit as usize] as u32
}
