//! Molecule and pattern fingerprints.
//!
//! All identifiers come from [`stable_hash`], a fixed FNV-1a variant with a
//! splitmix64 finalizer, so fingerprints never depend on process state.

mod atompair;
mod morgan;
mod mxfp;
mod path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use atompair::{atom_pair_counts, DEFAULT_MAX_PAIR_DISTANCE};
pub use morgan::{morgan_counts, morgan_fp};
pub use mxfp::{mxfp_apply, mxfp_build, Family, FamilySelection, MxfpConfig, MxfpSelector};
pub use path::{path_counts, path_fp, path_fp_with, DEFAULT_MAX_PATH_BONDS, DEFAULT_SCREEN_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint width {0} is not a power of two")]
    InvalidWidth(usize),
    #[error("feature family {0:?} contributes no features; check the configured lengths")]
    EmptySelection(Family),
    #[error("no training molecules supplied")]
    NoMolecules,
}

/// 64-bit FNV-1a over `bytes`, finished with the splitmix64 mixer so that
/// low bits are usable for folding.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(h)
}

pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerprintKind {
    Morgan,
    Path,
    Mxfp,
}

/// A fixed-length real-valued fingerprint (counts or 0/1).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFingerprint {
    pub values: Vec<f64>,
    pub kind: FingerprintKind,
    pub binary: bool,
}

impl DenseFingerprint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Elementwise indicator of nonzero entries.
    pub fn binarized(&self) -> DenseFingerprint {
        DenseFingerprint {
            values: self.values.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
            kind: self.kind,
            binary: true,
        }
    }
}

/// A fixed-width bitset used by the substructure screen.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitFingerprint {
    words: Vec<u64>,
    width: usize,
}

impl BitFingerprint {
    pub fn new(width: usize) -> Result<Self, FingerprintError> {
        if width == 0 || !width.is_power_of_two() {
            return Err(FingerprintError::InvalidWidth(width));
        }
        Ok(BitFingerprint { words: vec![0; width.div_ceil(64)], width })
    }

    pub fn from_bits(width: usize, bits: &[usize]) -> Result<Self, FingerprintError> {
        let mut fp = Self::new(width)?;
        for &b in bits {
            fp.set(b % width);
        }
        Ok(fp)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1u64 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] & (1u64 << (bit % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }

    pub fn to_dense(&self) -> DenseFingerprint {
        DenseFingerprint {
            values: (0..self.width).map(|b| if self.get(b) { 1.0 } else { 0.0 }).collect(),
            kind: FingerprintKind::Path,
            binary: true,
        }
    }
}
