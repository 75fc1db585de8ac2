//! Frame-structured overlay bitstream with per-word SECDED check bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layout::{Bits, BitstreamLayout, FabricConfig};
use crate::secded::{self, Syndrome};

pub const MAGIC: &[u8; 4] = b"ROVB";
pub const VERSION: u8 = 1;

/// One column frame: padded payload words and one check byte per word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    /// Payload length in bits, excluding padding.
    pub bits: usize,
    pub words: Vec<u64>,
    pub check: Vec<u8>,
}

impl Frame {
    pub fn get(&self, offset: usize) -> bool {
        (self.words[offset / 64] >> (offset % 64)) & 1 == 1
    }

    /// Flips a payload bit, leaving the check byte stale.
    pub fn flip(&mut self, offset: usize) {
        self.words[offset / 64] ^= 1u64 << (offset % 64);
    }

    pub fn syndromes(&self) -> impl Iterator<Item = (usize, Syndrome)> + '_ {
        self.words
            .iter()
            .zip(&self.check)
            .enumerate()
            .map(|(i, (&w, &c))| (i, secded::check(w, c)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bitstream {
    pub version: u8,
    pub fabric_hash: u64,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("bad magic, not an overlay bitstream")]
    Magic,
    #[error("unsupported bitstream version {0}")]
    Version(u8),
    #[error("fabric hash {found:#018x} does not match layout {expected:#018x}")]
    HashMismatch { expected: u64, found: u64 },
    #[error("bitstream length mismatch: {0}")]
    Length(String),
    #[error("bit index {index} outside the {total}-bit layout")]
    IndexOutOfRange { index: usize, total: usize },
}

/// A nonzero syndrome found while decoding. `offset` is the payload bit for
/// single data-bit errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordError {
    pub frame: usize,
    pub word: usize,
    pub syndrome: Syndrome,
    pub offset: Option<usize>,
}

impl WordError {
    pub fn uncorrectable(&self) -> bool {
        self.syndrome == Syndrome::Uncorrectable
    }
}

/// Decoded configuration together with every syndrome observed. Errors are
/// reported, never repaired: `config` reflects the raw payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub config: FabricConfig,
    pub errors: Vec<WordError>,
}

impl Decoded {
    pub fn has_uncorrectable(&self) -> bool {
        self.errors.iter().any(WordError::uncorrectable)
    }
}

pub fn encode_config(layout: &BitstreamLayout, config: &FabricConfig) -> Bitstream {
    Bitstream::from_bits(layout, &layout.pack(config))
}

pub fn decode_bitstream(layout: &BitstreamLayout, bitstream: &Bitstream) -> Result<Decoded, BitstreamError> {
    let bits = bitstream.payload(layout)?;
    let mut errors = Vec::new();
    for (f, frame) in bitstream.frames.iter().enumerate() {
        for (word, syndrome) in frame.syndromes() {
            if syndrome != Syndrome::Clean {
                let offset = match syndrome {
                    Syndrome::DataBit(b) => Some(word * 64 + b as usize),
                    _ => None,
                };
                errors.push(WordError {
                    frame: f,
                    word,
                    syndrome,
                    offset,
                });
            }
        }
    }
    Ok(Decoded {
        config: layout.unpack(&bits),
        errors,
    })
}

impl Bitstream {
    /// Packs a flat payload into frames and computes check bytes.
    pub fn from_bits(layout: &BitstreamLayout, bits: &Bits) -> Self {
        let frames = layout
            .frames()
            .iter()
            .map(|info| {
                let mut words = vec![0u64; info.words];
                for off in 0..info.bits {
                    if bits.get(info.start + off) {
                        words[off / 64] |= 1u64 << (off % 64);
                    }
                }
                let check = words.iter().map(|&w| secded::encode(w)).collect();
                Frame {
                    bits: info.bits,
                    words,
                    check,
                }
            })
            .collect();
        Bitstream {
            version: VERSION,
            fabric_hash: layout.fabric_hash(),
            frames,
        }
    }

    pub fn validate(&self, layout: &BitstreamLayout) -> Result<(), BitstreamError> {
        if self.fabric_hash != layout.fabric_hash() {
            return Err(BitstreamError::HashMismatch {
                expected: layout.fabric_hash(),
                found: self.fabric_hash,
            });
        }
        if self.frames.len() != layout.frames().len() {
            return Err(BitstreamError::Length(format!(
                "{} frames, layout has {}",
                self.frames.len(),
                layout.frames().len()
            )));
        }
        for (i, (frame, info)) in self.frames.iter().zip(layout.frames()).enumerate() {
            if frame.bits != info.bits || frame.words.len() != info.words || frame.check.len() != info.words {
                return Err(BitstreamError::Length(format!("frame {i} does not match layout")));
            }
        }
        Ok(())
    }

    /// Flat payload in global bit order (raw, uncorrected).
    pub fn payload(&self, layout: &BitstreamLayout) -> Result<Bits, BitstreamError> {
        self.validate(layout)?;
        let mut bits = Bits::zeros(layout.total_bits());
        for (frame, info) in self.frames.iter().zip(layout.frames()) {
            for off in 0..info.bits {
                if frame.get(off) {
                    bits.set(info.start + off, true);
                }
            }
        }
        Ok(bits)
    }

    pub fn get(&self, layout: &BitstreamLayout, index: usize) -> bool {
        let b = layout.bit(index);
        self.frames[b.frame].get(b.offset)
    }

    /// Flips payload bit `index` (global order) without touching check bytes.
    pub fn flip(&mut self, layout: &BitstreamLayout, index: usize) -> Result<(), BitstreamError> {
        if index >= layout.total_bits() {
            return Err(BitstreamError::IndexOutOfRange {
                index,
                total: layout.total_bits(),
            });
        }
        let b = layout.bit(index);
        self.frames[b.frame].flip(b.offset);
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.syndromes().all(|(_, s)| s == Syndrome::Clean))
    }

    /// Indices of frames whose payload or check bytes differ.
    pub fn changed_frames(&self, other: &Bitstream) -> Vec<usize> {
        self.frames
            .iter()
            .zip(&other.frames)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.fabric_hash.to_be_bytes());
        for frame in &self.frames {
            for (w, c) in frame.words.iter().zip(&frame.check) {
                out.extend_from_slice(&w.to_le_bytes());
                out.push(*c);
            }
        }
        out
    }

    /// Parses the binary file format. Frame sizes come from the layout.
    pub fn from_bytes(layout: &BitstreamLayout, bytes: &[u8]) -> Result<Self, BitstreamError> {
        if bytes.len() < 13 || &bytes[..4] != MAGIC {
            return Err(BitstreamError::Magic);
        }
        if bytes[4] != VERSION {
            return Err(BitstreamError::Version(bytes[4]));
        }
        let fabric_hash = u64::from_be_bytes(bytes[5..13].try_into().unwrap());
        if fabric_hash != layout.fabric_hash() {
            return Err(BitstreamError::HashMismatch {
                expected: layout.fabric_hash(),
                found: fabric_hash,
            });
        }
        let body = &bytes[13..];
        let words: usize = layout.frames().iter().map(|f| f.words).sum();
        if body.len() != words * 9 {
            return Err(BitstreamError::Length(format!(
                "{} payload bytes, layout needs {}",
                body.len(),
                words * 9
            )));
        }
        let mut chunks = body.chunks_exact(9);
        let frames = layout
            .frames()
            .iter()
            .map(|info| {
                let (words, check) = (0..info.words)
                    .map(|_| {
                        let c = chunks.next().unwrap();
                        (u64::from_le_bytes(c[..8].try_into().unwrap()), c[8])
                    })
                    .unzip();
                Frame {
                    bits: info.bits,
                    words,
                    check,
                }
            })
            .collect();
        Ok(Bitstream {
            version: VERSION,
            fabric_hash,
            frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{bit_layout, parse_fabric, FabricArch};
    use proptest::prelude::*;

    fn arch() -> FabricArch {
        parse_fabric("rows 3\ncols 3\nchannel_width 4\nhardening tmr_fu\nfu 0 0 mul\nfu 1 1 add\nfu 2 0 subabs\n")
            .unwrap()
    }

    fn random_bits(layout: &BitstreamLayout, seed: u64) -> Bits {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bits = Bits::zeros(layout.total_bits());
        for i in 0..bits.len() {
            bits.set(i, rng.gen());
        }
        bits
    }

    #[test]
    fn fresh_bitstream_is_clean_and_round_trips() {
        let layout = bit_layout(&arch());
        let config = layout.unpack(&random_bits(&layout, 1));
        let bs = encode_config(&layout, &config);
        assert!(bs.is_clean());
        assert_eq!(bs.frames.len(), 3);
        let decoded = decode_bitstream(&layout, &bs).unwrap();
        assert!(decoded.errors.is_empty());
        assert_eq!(decoded.config, config);
        let parsed = Bitstream::from_bytes(&layout, &bs.to_bytes()).unwrap();
        assert_eq!(parsed, bs);
    }

    #[test]
    fn single_flip_reported_at_its_offset() {
        let layout = bit_layout(&arch());
        let bs = encode_config(&layout, &layout.blank());
        for index in [0, 5, layout.frames()[1].start + 70, layout.total_bits() - 1] {
            let mut hit = bs.clone();
            hit.flip(&layout, index).unwrap();
            let decoded = decode_bitstream(&layout, &hit).unwrap();
            let info = layout.bit(index);
            assert_eq!(decoded.errors.len(), 1);
            let e = decoded.errors[0];
            assert_eq!((e.frame, e.offset), (info.frame, Some(info.offset)));
            assert!(!decoded.has_uncorrectable());
        }
    }

    #[test]
    fn double_flip_in_word_is_uncorrectable() {
        let layout = bit_layout(&arch());
        let mut bs = encode_config(&layout, &layout.blank());
        bs.flip(&layout, 3).unwrap();
        bs.flip(&layout, 40).unwrap();
        let decoded = decode_bitstream(&layout, &bs).unwrap();
        assert!(decoded.has_uncorrectable());
    }

    #[test]
    fn hash_and_length_mismatch() {
        let layout = bit_layout(&arch());
        let other = bit_layout(&arch().with_separation(5));
        let bs = encode_config(&layout, &layout.blank());
        assert!(matches!(
            decode_bitstream(&other, &bs),
            Err(BitstreamError::HashMismatch { .. })
        ));
        let mut bytes = bs.to_bytes();
        bytes.pop();
        assert!(matches!(
            Bitstream::from_bytes(&layout, &bytes),
            Err(BitstreamError::Length(_))
        ));
        assert_eq!(Bitstream::from_bytes(&layout, b"XXXX"), Err(BitstreamError::Magic));
        let mut short = bs.clone();
        short.frames.pop();
        assert!(matches!(decode_bitstream(&layout, &short), Err(BitstreamError::Length(_))));
        let mut b = bs;
        assert!(b.flip(&layout, layout.total_bits()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn encode_decode_identity(seed in any::<u64>()) {
            let layout = bit_layout(&arch());
            let config = layout.unpack(&random_bits(&layout, seed));
            let bs = encode_config(&layout, &config);
            prop_assert_eq!(decode_bitstream(&layout, &bs).unwrap().config, config);
        }
    }
}
