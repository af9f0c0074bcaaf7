//! Invertible Bloom filter with a fallback table.
//!
//! Each update touches `k` cells of table `B` (via `h_1..h_k`) and two cells
//! of table `C` (via `f_1, f_2`), adding the signed multiplicity to `count`,
//! `x` times it to `idSum` and `g(x)` times it to `hashSum`. All three fields
//! are fixed-width two's-complement integers that wrap, so insertion and
//! deletion are exact inverses whatever the load.
//!
//! Listing peels pure cells: a cell whose fields are consistent with a single
//! identifier `x` repeated `c` times (`c` negative for false deletions).
//! `B` is peeled first; if residue remains, `C` and `B` are peeled in turn
//! until neither yields a pure cell.

use crate::hashing::{HashConfig, HashError, HashMode, Table};
use crate::wire::{BitReader, BitWriter, ByteReader, WireError};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"IBF1";
const FORMAT_VERSION: u16 = 1;
/// magic, version, d, epsilon (num, den), k, m, n_bound, three widths, mode, seed
pub const HEADER_BYTES: usize = 4 + 2 + 4 + 8 + 2 + 4 + 8 + 3 + 1 + 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IbfError {
    #[error("identifier {id} exceeds the universe bound {n_bound}")]
    IdentifierOutOfRange { id: u64, n_bound: u64 },
    #[error("filters were built with different parameters")]
    ParamsMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<HashError> for IbfError {
    fn from(e: HashError) -> Self {
        match e {
            HashError::IdentifierOutOfRange { id, n_bound } => {
                IbfError::IdentifierOutOfRange { id, n_bound }
            }
            HashError::InvalidConfig(msg) => IbfError::InvalidParams(msg),
        }
    }
}

/// Failure bound as an exact fraction `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Epsilon {
    num: u32,
    den: u32,
}

impl Epsilon {
    pub fn new(num: u32, den: u32) -> Result<Self, IbfError> {
        if num == 0 || den == 0 || num as u64 * 4 >= den as u64 {
            return Err(IbfError::InvalidParams(format!(
                "epsilon {num}/{den} must lie in (0, 1/4)"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(log2(1/ε))`.
    pub fn default_k(&self) -> u16 {
        let mut k = 0u16;
        while (self.num as u128) << k < self.den as u128 {
            k += 1;
        }
        k
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Bit widths of the three cell fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellWidths {
    pub count: u8,
    pub id: u8,
    pub hash: u8,
}

impl CellWidths {
    /// 16-bit count and idSum with a 32-bit hashSum, as in the published experiments.
    pub const PAPER: CellWidths = CellWidths {
        count: 16,
        id: 16,
        hash: 32,
    };
    pub const WIDE: CellWidths = CellWidths {
        count: 64,
        id: 64,
        hash: 64,
    };

    pub fn for_mode(mode: HashMode) -> Self {
        match mode {
            HashMode::Default => Self::WIDE,
            HashMode::PaperReplication => Self::PAPER,
        }
    }

    pub fn cell_bits(&self) -> usize {
        self.count as usize + self.id as usize + self.hash as usize
    }
}

fn mask(bits: u8) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn sign_extend(v: u64, bits: u8) -> i64 {
    if bits >= 64 {
        v as i64
    } else {
        let shift = 64 - bits as u32;
        ((v << shift) as i64) >> shift
    }
}

/// Number of bits needed to write `v` in binary.
fn bit_len(v: u128) -> u32 {
    128 - v.leading_zeros()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IbfParams {
    d: u32,
    epsilon: Epsilon,
    widths: CellWidths,
    hash: HashConfig,
}

impl IbfParams {
    /// Default sizing: `k = ceil(log2(1/ε))`, `m = 4dk` cells per table, and
    /// the widths belonging to `mode`.
    pub fn new(
        d: u32,
        epsilon: Epsilon,
        n_bound: u64,
        mode: HashMode,
        seed: [u8; 16],
    ) -> Result<Self, IbfError> {
        let k = epsilon.default_k();
        let m = 4u64 * d as u64 * k as u64;
        let m = u32::try_from(m)
            .map_err(|_| IbfError::InvalidParams(format!("table size {m} too large")))?;
        Self::custom(
            d,
            epsilon,
            k,
            m,
            n_bound,
            CellWidths::for_mode(mode),
            mode,
            seed,
        )
    }

    /// Explicit sizing, for experiments that pin `k` and `m`.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        d: u32,
        epsilon: Epsilon,
        k: u16,
        m: u32,
        n_bound: u64,
        widths: CellWidths,
        mode: HashMode,
        seed: [u8; 16],
    ) -> Result<Self, IbfError> {
        if d == 0 {
            return Err(IbfError::InvalidParams("d must be at least 1".into()));
        }
        let hash = HashConfig::new(seed, k, m, n_bound, mode)?;
        let params = Self {
            d,
            epsilon,
            widths,
            hash,
        };
        params.check_widths()?;
        Ok(params)
    }

    /// Sums of up to `d` signed copies must fit each field without wrapping:
    /// `count` needs `log d` bits, `idSum` `log n + log d`, `hashSum`
    /// `log(max g) + log d`, each plus a sign bit.
    fn check_widths(&self) -> Result<(), IbfError> {
        let w = self.widths;
        for (name, bits) in [("count", w.count), ("idSum", w.id), ("hashSum", w.hash)] {
            if !(2..=64).contains(&bits) {
                return Err(IbfError::InvalidParams(format!(
                    "{name} width {bits} outside 2..=64"
                )));
            }
        }
        let d_bits = bit_len(self.d as u128);
        let need_count = d_bits + 1;
        let need_id = bit_len(self.n_bound() as u128) + d_bits + 1;
        let need_hash = bit_len(self.hash.check_max()) + d_bits + 1;
        for (name, have, need) in [
            ("count", w.count, need_count),
            ("idSum", w.id, need_id),
            ("hashSum", w.hash, need_hash),
        ] {
            if (have as u32) < need {
                return Err(IbfError::InvalidParams(format!(
                    "{name} width {have} below the {need} bits needed for d = {} and n = {}",
                    self.d,
                    self.n_bound()
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn epsilon(&self) -> Epsilon {
        self.epsilon
    }

    pub fn k(&self) -> u16 {
        self.hash.k()
    }

    pub fn m(&self) -> u32 {
        self.hash.m()
    }

    pub fn n_bound(&self) -> u64 {
        self.hash.n_bound()
    }

    pub fn widths(&self) -> CellWidths {
        self.widths
    }

    pub fn hash_config(&self) -> &HashConfig {
        &self.hash
    }

    pub fn mode(&self) -> HashMode {
        self.hash.mode()
    }

    /// Size in bytes of a serialized filter with these parameters.
    pub fn serialized_len(&self) -> usize {
        HEADER_BYTES + (2 * self.m() as usize * self.widths.cell_bits()).div_ceil(8) + 8
    }

    /// Bits of cell storage, `2 m (w_count + w_id + w_hash)`.
    pub fn table_bits(&self) -> u64 {
        2 * self.m() as u64 * self.widths.cell_bits() as u64
    }

    fn write_header(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&self.epsilon.num.to_le_bytes());
        out.extend_from_slice(&self.epsilon.den.to_le_bytes());
        out.extend_from_slice(&self.k().to_le_bytes());
        out.extend_from_slice(&self.m().to_le_bytes());
        out.extend_from_slice(&self.n_bound().to_le_bytes());
        out.extend_from_slice(&[self.widths.count, self.widths.id, self.widths.hash]);
        out.push(self.mode().to_byte());
        out.extend_from_slice(&self.hash.seed());
    }

    fn read_header(r: &mut ByteReader<'_>) -> Result<Self, IbfError> {
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(WireError::UnsupportedVersion(version).into());
        }
        let d = r.u32()?;
        let num = r.u32()?;
        let den = r.u32()?;
        let k = r.u16()?;
        let m = r.u32()?;
        let n_bound = r.u64()?;
        let widths = CellWidths {
            count: r.u8()?,
            id: r.u8()?,
            hash: r.u8()?,
        };
        let mode_byte = r.u8()?;
        let mode = HashMode::from_byte(mode_byte)
            .ok_or_else(|| WireError::InvalidHeader(format!("hash mode {mode_byte}")))?;
        let seed: [u8; 16] = r.take(16)?.try_into().unwrap();
        let epsilon = Epsilon::new(num, den)?;
        Self::custom(d, epsilon, k, m, n_bound, widths, mode, seed)
    }
}

/// One cell. Fields hold raw two's-complement bit patterns truncated to
/// their widths; interpret them through [`InvertibleBloomFilter::cell_values`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct IbfCell {
    pub count: u64,
    pub id_sum: u64,
    pub hash_sum: u64,
}

impl IbfCell {
    pub fn is_zero(&self) -> bool {
        self.count == 0 && self.id_sum == 0 && self.hash_sum == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStatus {
    Complete,
    Incomplete,
}

/// Recovered identifiers with signed multiplicities: positive for net
/// insertions, negative for false deletions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub recovered: BTreeMap<u64, i64>,
    pub status: DecodeStatus,
}

impl DecodeResult {
    pub fn is_complete(&self) -> bool {
        self.status == DecodeStatus::Complete
    }

    /// Identifiers with positive multiplicity.
    pub fn stragglers(&self) -> impl Iterator<Item = u64> + '_ {
        self.recovered
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&x, _)| x)
    }

    /// Identifiers with negative multiplicity.
    pub fn false_deletions(&self) -> impl Iterator<Item = u64> + '_ {
        self.recovered
            .iter()
            .filter(|(_, &c)| c < 0)
            .map(|(&x, _)| x)
    }
}

/// What listing does when `B` alone cannot be emptied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Peel `B` only.
    None,
    /// After `B` stalls, peel `C`, and keep alternating between the two
    /// tables while either makes progress.
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertibleBloomFilter {
    params: IbfParams,
    b: Vec<IbfCell>,
    c: Vec<IbfCell>,
    count: i64,
}

impl InvertibleBloomFilter {
    pub fn new(params: IbfParams) -> Self {
        let m = params.m() as usize;
        Self {
            params,
            b: vec![IbfCell::default(); m],
            c: vec![IbfCell::default(); m],
            count: 0,
        }
    }

    pub fn params(&self) -> &IbfParams {
        &self.params
    }

    pub fn table(&self, table: Table) -> &[IbfCell] {
        match table {
            Table::B => &self.b,
            Table::C => &self.c,
        }
    }

    pub fn global_count(&self) -> i64 {
        self.count
    }

    /// True when every cell and the global counter are zero.
    pub fn is_empty(&self) -> bool {
        self.count == 0 && self.b.iter().chain(&self.c).all(IbfCell::is_zero)
    }

    /// Signed `(count, idSum, hashSum)` of a cell.
    pub fn cell_values(&self, cell: &IbfCell) -> (i64, i64, i64) {
        let w = self.params.widths;
        (
            sign_extend(cell.count, w.count),
            sign_extend(cell.id_sum, w.id),
            sign_extend(cell.hash_sum, w.hash),
        )
    }

    pub fn insert(&mut self, x: u64) -> Result<(), IbfError> {
        self.apply(x, 1)
    }

    pub fn delete(&mut self, x: u64) -> Result<(), IbfError> {
        self.apply(x, -1)
    }

    /// Adds `multiplicity` copies of `x` (negative removes), as one scaled update.
    pub fn apply(&mut self, x: u64, multiplicity: i64) -> Result<(), IbfError> {
        let g = self.params.hash.check_hash(x)?;
        let b_idx = self.params.hash.cell_indices(Table::B, x);
        let c_idx = self.params.hash.cell_indices(Table::C, x);
        self.apply_at(x, g, multiplicity, &b_idx, &c_idx);
        Ok(())
    }

    fn apply_at(&mut self, x: u64, g: u128, c: i64, b_idx: &[usize], c_idx: &[usize]) {
        let w = self.params.widths;
        let (mc, mi, mh) = (mask(w.count), mask(w.id), mask(w.hash));
        let dc = c as u64;
        let di = x.wrapping_mul(c as u64);
        let dh = (g as u64).wrapping_mul(c as u64);
        let bump = |cell: &mut IbfCell| {
            cell.count = cell.count.wrapping_add(dc) & mc;
            cell.id_sum = cell.id_sum.wrapping_add(di) & mi;
            cell.hash_sum = cell.hash_sum.wrapping_add(dh) & mh;
        };
        for &j in b_idx {
            bump(&mut self.b[j]);
        }
        for &j in c_idx {
            bump(&mut self.c[j]);
        }
        self.count = self.count.wrapping_add(c);
    }

    /// If the cell looks like `c` copies of a single identifier `x`, returns
    /// `(x, c)`: the count is nonzero and divides idSum exactly, the quotient
    /// is a valid identifier, and `c · g(x)` equals hashSum in the cell's
    /// wrap-around arithmetic.
    pub fn is_pure(&self, cell: &IbfCell) -> Option<(u64, i64)> {
        let (count, id_sum, _) = self.cell_values(cell);
        if count == 0 || id_sum % count != 0 {
            return None;
        }
        let x = id_sum / count;
        if x < 0 || x as u64 > self.params.n_bound() {
            return None;
        }
        let x = x as u64;
        let g = self.params.hash.check_hash(x).ok()? as u64;
        if g.wrapping_mul(count as u64) & mask(self.params.widths.hash) != cell.hash_sum {
            return None;
        }
        Some((x, count))
    }

    /// Lists the net signed multiset. Works on a scratch copy, so the filter
    /// itself is never modified.
    pub fn list_stragglers(&self) -> DecodeResult {
        self.list_stragglers_with(Fallback::Table)
    }

    pub fn list_stragglers_with(&self, fallback: Fallback) -> DecodeResult {
        let mut work = self.clone();
        let mut recovered = BTreeMap::new();
        let total: u128 = self
            .b
            .iter()
            .chain(&self.c)
            .map(|cell| self.cell_values(cell).0.unsigned_abs() as u128)
            .sum();
        let mut budget = total + self.params.m() as u128;

        work.peel(Table::B, &mut recovered, &mut budget);
        if fallback == Fallback::Table {
            while !work.is_empty() {
                if work.peel(Table::C, &mut recovered, &mut budget) == 0 {
                    break;
                }
                if work.peel(Table::B, &mut recovered, &mut budget) == 0 {
                    break;
                }
            }
        }
        let status = if work.is_empty() {
            DecodeStatus::Complete
        } else {
            DecodeStatus::Incomplete
        };
        DecodeResult { recovered, status }
    }

    /// Peels pure cells of one table until none remain or the budget runs
    /// out. Removals are applied to both tables. Returns the number of items
    /// peeled.
    fn peel(
        &mut self,
        table: Table,
        recovered: &mut BTreeMap<u64, i64>,
        budget: &mut u128,
    ) -> usize {
        let m = self.params.m() as usize;
        let mut queue: VecDeque<usize> = (0..m).collect();
        let mut queued = vec![true; m];
        let mut peeled = 0;
        while let Some(j) = queue.pop_front() {
            queued[j] = false;
            if *budget == 0 {
                break;
            }
            let cell = self.table(table)[j];
            let Some((x, c)) = self.is_pure(&cell) else {
                continue;
            };
            let b_idx = self.params.hash.cell_indices(Table::B, x);
            let c_idx = self.params.hash.cell_indices(Table::C, x);
            let own: &SmallVec<[usize; 8]> = match table {
                Table::B => &b_idx,
                Table::C => &c_idx,
            };
            // sanity: the identifier must hash to the cell that revealed it;
            // a cell hit twice by x holds twice its multiplicity
            let hits = own.iter().filter(|&&t| t == j).count() as i64;
            if hits == 0 || c % hits != 0 {
                continue;
            }
            let c = c / hits;
            let g = self
                .params
                .hash
                .check_hash(x)
                .expect("x checked against n_bound");
            self.apply_at(x, g, -c, &b_idx, &c_idx);
            let entry = recovered.entry(x).or_insert(0);
            *entry += c;
            if *entry == 0 {
                recovered.remove(&x);
            }
            *budget -= 1;
            peeled += 1;
            for &t in own.iter() {
                if !queued[t] && !self.table(table)[t].is_zero() {
                    queued[t] = true;
                    queue.push_back(t);
                }
            }
        }
        peeled
    }

    fn check_compatible(&self, other: &Self) -> Result<(), IbfError> {
        if self.params != other.params {
            return Err(IbfError::ParamsMismatch);
        }
        Ok(())
    }

    fn combine(&self, other: &Self, sign: i64) -> Result<Self, IbfError> {
        self.check_compatible(other)?;
        let w = self.params.widths;
        let (mc, mi, mh) = (mask(w.count), mask(w.id), mask(w.hash));
        let s = sign as u64;
        let mix = |a: &IbfCell, b: &IbfCell| IbfCell {
            count: a.count.wrapping_add(b.count.wrapping_mul(s)) & mc,
            id_sum: a.id_sum.wrapping_add(b.id_sum.wrapping_mul(s)) & mi,
            hash_sum: a.hash_sum.wrapping_add(b.hash_sum.wrapping_mul(s)) & mh,
        };
        Ok(Self {
            params: self.params.clone(),
            b: self
                .b
                .iter()
                .zip(&other.b)
                .map(|(a, b)| mix(a, b))
                .collect(),
            c: self
                .c
                .iter()
                .zip(&other.c)
                .map(|(a, b)| mix(a, b))
                .collect(),
            count: self.count.wrapping_add(other.count.wrapping_mul(sign)),
        })
    }

    /// Cellwise sum: the filter of both update streams together.
    pub fn merge(&self, other: &Self) -> Result<Self, IbfError> {
        self.combine(other, 1)
    }

    /// Cellwise difference: `self`'s stream followed by the negation of `other`'s.
    pub fn subtract(&self, other: &Self) -> Result<Self, IbfError> {
        self.combine(other, -1)
    }

    pub fn serialized_len(&self) -> usize {
        self.params.serialized_len()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.params.write_header(&mut out);
        let w = self.params.widths;
        let mut bits = BitWriter::new(&mut out);
        for cell in self.b.iter().chain(&self.c) {
            bits.write(cell.count, w.count as u32);
            bits.write(cell.id_sum, w.id as u32);
            bits.write(cell.hash_sum, w.hash as u32);
        }
        bits.finish();
        out.extend_from_slice(&self.count.to_le_bytes());
        debug_assert_eq!(out.len(), self.serialized_len());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, IbfError> {
        let mut r = ByteReader::new(bytes);
        let params = IbfParams::read_header(&mut r)?;
        let m = params.m() as usize;
        let w = params.widths;
        let body = r.take((2 * m * w.cell_bits()).div_ceil(8))?;
        let mut bits = BitReader::new(body);
        let mut cells = (0..2 * m).map(|_| IbfCell {
            count: bits.read(w.count as u32),
            id_sum: bits.read(w.id as u32),
            hash_sum: bits.read(w.hash as u32),
        });
        let b: Vec<IbfCell> = cells.by_ref().take(m).collect();
        let c: Vec<IbfCell> = cells.collect();
        let count = r.i64()?;
        r.finish()?;
        Ok(Self {
            params,
            b,
            c,
            count,
        })
    }
}
