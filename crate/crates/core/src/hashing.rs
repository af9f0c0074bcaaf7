//! Seeded hash family for the invertible Bloom filter.
//!
//! Every function is derived from one keyed hash over
//! `seed ‖ table tag ‖ function index ‖ x`, so two processes holding the
//! same [`HashConfig`] compute identical cell positions and check values.
//!
//! Two modes exist. [`HashMode::Default`] uses SipHash-2-4 keyed by the
//! 128-bit seed and maps the check hash `g` into `[0, n^2]`.
//! [`HashMode::PaperReplication`] uses SHA-1 and maps `g` into `[0, 10210]`,
//! the setup behind the published saturation histograms.

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use siphasher::sip128::{Hasher128, SipHasher24};
use smallvec::SmallVec;
use std::hash::Hasher;
use thiserror::Error;

/// Range of `g` in paper-replication mode: values `0..10211`.
pub const PAPER_CHECK_MODULUS: u128 = 10211;

const TAG_B: u8 = b'B';
const TAG_C: u8 = b'C';
const TAG_G: u8 = b'G';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("identifier {id} exceeds the universe bound {n_bound}")]
    IdentifierOutOfRange { id: u64, n_bound: u64 },
    #[error("invalid hash configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashMode {
    Default,
    PaperReplication,
}

impl HashMode {
    pub fn to_byte(self) -> u8 {
        match self {
            HashMode::Default => 0,
            HashMode::PaperReplication => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(HashMode::Default),
            1 => Some(HashMode::PaperReplication),
            _ => None,
        }
    }
}

/// Which table a cell hash addresses: `B` uses `h_1..h_k`, `C` uses `f_1, f_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    B,
    C,
}

impl Table {
    pub fn function_count(self, k: u16) -> u16 {
        match self {
            Table::B => k,
            Table::C => 2,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Table::B => TAG_B,
            Table::C => TAG_C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashConfig {
    seed: [u8; 16],
    k: u16,
    m: u32,
    n_bound: u64,
    mode: HashMode,
}

impl HashConfig {
    pub fn new(
        seed: [u8; 16],
        k: u16,
        m: u32,
        n_bound: u64,
        mode: HashMode,
    ) -> Result<Self, HashError> {
        if k == 0 {
            return Err(HashError::InvalidConfig("k must be at least 1".into()));
        }
        if m == 0 {
            return Err(HashError::InvalidConfig("m must be at least 1".into()));
        }
        Ok(Self {
            seed,
            k,
            m,
            n_bound,
            mode,
        })
    }

    pub fn seed(&self) -> [u8; 16] {
        self.seed
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n_bound(&self) -> u64 {
        self.n_bound
    }

    pub fn mode(&self) -> HashMode {
        self.mode
    }

    fn digest(&self, tag: u8, index: u16, x: u64) -> u128 {
        match self.mode {
            HashMode::Default => {
                let mut h = SipHasher24::new_with_key(&self.seed);
                h.write_u8(tag);
                h.write(&index.to_le_bytes());
                h.write(&x.to_le_bytes());
                h.finish128().as_u128()
            }
            HashMode::PaperReplication => {
                let mut h = Sha1::new();
                h.update(self.seed);
                h.update([tag]);
                h.update(index.to_le_bytes());
                h.update(x.to_le_bytes());
                let out = h.finalize();
                u128::from_be_bytes(out[..16].try_into().unwrap())
            }
        }
    }

    /// Cell index in `[0, m)` of hash function `i` (1-based) for `table`.
    ///
    /// Panics when `i` is not a valid function index for the table.
    pub fn cell_hash(&self, table: Table, i: u16, x: u64) -> usize {
        assert!(
            (1..=table.function_count(self.k)).contains(&i),
            "hash function index {i} out of range for table {table:?}"
        );
        (self.digest(table.tag(), i, x) % self.m as u128) as usize
    }

    /// All cell indices of `x` in `table`, in function order. Repeats are kept.
    pub fn cell_indices(&self, table: Table, x: u64) -> SmallVec<[usize; 8]> {
        (1..=table.function_count(self.k))
            .map(|i| self.cell_hash(table, i, x))
            .collect()
    }

    /// Number of distinct values `g` can take.
    pub fn check_modulus(&self) -> u128 {
        match self.mode {
            HashMode::Default => (self.n_bound as u128) * (self.n_bound as u128) + 1,
            HashMode::PaperReplication => PAPER_CHECK_MODULUS,
        }
    }

    /// Largest value `g` can return.
    pub fn check_max(&self) -> u128 {
        self.check_modulus() - 1
    }

    /// The purity-check hash `g(x)`.
    pub fn check_hash(&self, x: u64) -> Result<u128, HashError> {
        if x > self.n_bound {
            return Err(HashError::IdentifierOutOfRange {
                id: x,
                n_bound: self.n_bound,
            });
        }
        Ok(self.digest(TAG_G, 0, x) % self.check_modulus())
    }
}
