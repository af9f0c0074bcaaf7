//! Deterministic straggler sketch: power sums `s_0..s_d` over GF(p^e).
//!
//! Insertions add `x^k` to every power sum and deletions subtract it. A query
//! converts the power sums into elementary symmetric polynomials with
//! Newton's identities, forms `P(x) = Π (x - x_i)` and reads the stragglers
//! off its roots. The state depends only on the current set, so updates
//! commute and sketches of disjoint shards can be added together.
//!
//! False deletions and duplicate insertions are outside the contract; the
//! decoder detects the resulting inconsistencies and reports
//! [`SketchError::DecodeFailure`] instead of answering.

use crate::field::{choose_field, FieldElement, FieldError, FieldParams, GaloisField};
use crate::poly::{self, RootFindingError};
use crate::wire::{ByteReader, WireError};
use std::collections::BTreeSet;
use std::sync::Arc;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PSK1";
const FORMAT_VERSION: u16 = 1;
/// magic, version, p, e, d, n
const FIXED_HEADER_BYTES: usize = 4 + 2 + 4 + 2 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("identifier {id} exceeds the universe bound {n_bound}")]
    IdentifierOutOfRange { id: u64, n_bound: u64 },
    #[error("{count} stragglers exceed the bound d = {d}")]
    Overflow { count: i64, d: usize },
    #[error("decode failed: {0}")]
    DecodeFailure(String),
    #[error("sketches were built over different parameters")]
    ParamsMismatch,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<RootFindingError> for SketchError {
    fn from(e: RootFindingError) -> Self {
        SketchError::DecodeFailure(e.to_string())
    }
}

/// Identifiers recovered by a query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StragglerList {
    ids: BTreeSet<u64>,
}

impl StragglerList {
    pub fn ids(&self) -> &BTreeSet<u64> {
        &self.ids
    }

    pub fn into_ids(self) -> BTreeSet<u64> {
        self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerSumSketch {
    field: Arc<GaloisField>,
    d: usize,
    s0: i64,
    sums: Vec<FieldElement>,
}

impl PowerSumSketch {
    /// Empty sketch for up to `d` stragglers among identifiers `0..=n`.
    pub fn new(d: usize, n: u64) -> Self {
        let field = Arc::new(GaloisField::new(choose_field(d as u64, n)));
        Self::with_field(field, d)
    }

    /// Empty sketch over an existing field, so that many sketches can share
    /// one set of precomputed tables. The field characteristic must exceed `d`.
    pub fn with_field(field: Arc<GaloisField>, d: usize) -> Self {
        assert!(d >= 1, "straggler bound must be positive");
        assert!((field.p() as usize) > d, "characteristic must exceed d");
        let sums = vec![field.zero(); d];
        Self {
            field,
            d,
            s0: 0,
            sums,
        }
    }

    pub fn field(&self) -> &Arc<GaloisField> {
        &self.field
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_bound(&self) -> u64 {
        self.field.params().n_bound()
    }

    /// Power sums `s_1..s_d`.
    pub fn power_sums(&self) -> &[FieldElement] {
        &self.sums
    }

    pub fn insert(&mut self, x: u64) -> Result<(), SketchError> {
        self.update(x, true)
    }

    pub fn delete(&mut self, x: u64) -> Result<(), SketchError> {
        self.update(x, false)
    }

    fn update(&mut self, x: u64, insert: bool) -> Result<(), SketchError> {
        let n_bound = self.n_bound();
        if x > n_bound {
            return Err(SketchError::IdentifierOutOfRange { id: x, n_bound });
        }
        let f = &self.field;
        let base = f.encode_id(x);
        let mut power = base.clone();
        for (k, sum) in self.sums.iter_mut().enumerate() {
            if insert {
                f.add_assign(sum, &power);
            } else {
                f.sub_assign(sum, &power);
            }
            if k + 1 < self.d {
                power = f.mul(&power, &base);
            }
        }
        self.s0 += if insert { 1 } else { -1 };
        Ok(())
    }

    /// Net number of insertions, `s_0`.
    pub fn count_stragglers(&self) -> i64 {
        self.s0
    }

    /// Elementary symmetric polynomials `σ_1..σ_{s0}` from the power sums,
    /// using `k σ_k = Σ_{i=1..k} (-1)^(i-1) σ_{k-i} s_i`.
    pub fn newton_elementary(&self) -> Result<Vec<FieldElement>, SketchError> {
        let m = self.checked_count()?;
        elementary_from_power_sums(&self.field, &self.sums[..m]).map_err(SketchError::from)
    }

    fn checked_count(&self) -> Result<usize, SketchError> {
        if self.s0 < 0 {
            return Err(SketchError::DecodeFailure(format!(
                "negative count {}",
                self.s0
            )));
        }
        if self.s0 as usize > self.d {
            return Err(SketchError::Overflow {
                count: self.s0,
                d: self.d,
            });
        }
        Ok(self.s0 as usize)
    }

    /// Recovers the current set. Leaves the sketch untouched.
    pub fn list_stragglers(&self) -> Result<StragglerList, SketchError> {
        let sigma = self.newton_elementary()?;
        let p = build_polynomial(&self.field, &sigma);
        let roots = poly::find_roots(&self.field, &p)?;
        let mut ids = BTreeSet::new();
        for r in &roots {
            let id = self
                .field
                .decode_id(r)
                .map_err(|e| SketchError::DecodeFailure(e.to_string()))?;
            ids.insert(id);
        }
        // The higher power sums were not used above; they must agree too.
        let mut check = Self::with_field(self.field.clone(), self.d);
        for &id in &ids {
            check.insert(id)?;
        }
        if check.sums != self.sums {
            return Err(SketchError::DecodeFailure(
                "power sums are inconsistent with the recovered set".into(),
            ));
        }
        Ok(StragglerList { ids })
    }

    /// Adds another sketch's state into this one (union of disjoint streams).
    pub fn combine(&mut self, other: &Self) -> Result<(), SketchError> {
        if self.d != other.d || self.field.params() != other.field.params() {
            return Err(SketchError::ParamsMismatch);
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            self.field.add_assign(a, b);
        }
        self.s0 += other.s0;
        Ok(())
    }

    /// Total encoded size: fixed header, the modulus and `s_1..s_d` as `d + 1`
    /// field elements, and the 8-byte counter.
    pub fn serialized_len(&self) -> usize {
        FIXED_HEADER_BYTES + (self.d + 1) * self.field.params().element_bytes() + 8
    }

    pub fn serialize(&self) -> Vec<u8> {
        let params = self.field.params();
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&params.p().to_le_bytes());
        out.extend_from_slice(&(params.e() as u16).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&params.n_bound().to_le_bytes());
        let modulus = self
            .field
            .element(params.modulus())
            .expect("modulus coefficients are reduced");
        self.field.write_element(&modulus, &mut out);
        out.extend_from_slice(&self.s0.to_le_bytes());
        for s in &self.sums {
            self.field.write_element(s, &mut out);
        }
        debug_assert_eq!(out.len(), self.serialized_len());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, SketchError> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(WireError::UnsupportedVersion(version).into());
        }
        let p = r.u32()?;
        let e = r.u16()? as usize;
        let d = r.u32()? as usize;
        let n = r.u64()?;
        if d == 0 || p as usize <= d {
            return Err(
                WireError::InvalidHeader(format!("p = {p} must exceed d = {d} >= 1")).into(),
            );
        }
        if e == 0 || e > 128 {
            return Err(WireError::InvalidHeader(format!("extension degree {e}")).into());
        }
        // decode the modulus with a throwaway element layout of the right size
        let elem_bytes = (e * (32 - p.saturating_sub(1).leading_zeros()) as usize).div_ceil(8);
        let raw = r.take(elem_bytes)?;
        let modulus = unpack_coeffs(raw, p, e);
        let params = FieldParams::new(p, e, modulus, n)?;
        let field = Arc::new(GaloisField::new(params));
        let s0 = r.i64()?;
        let mut sums = Vec::with_capacity(d);
        for _ in 0..d {
            sums.push(field.read_element(r.take(elem_bytes)?)?);
        }
        r.finish()?;
        Ok(Self { field, d, s0, sums })
    }
}

fn unpack_coeffs(raw: &[u8], p: u32, e: usize) -> Vec<u32> {
    let bits = 32 - p.saturating_sub(1).leading_zeros();
    let mut r = crate::wire::BitReader::new(raw);
    (0..e).map(|_| r.read(bits) as u32).collect()
}

/// Newton's identities solved for `σ_k` in increasing `k`. The number of
/// power sums given is the number of roots assumed.
pub fn elementary_from_power_sums(
    f: &GaloisField,
    power_sums: &[FieldElement],
) -> Result<Vec<FieldElement>, FieldError> {
    let m = power_sums.len();
    let mut sigma: Vec<FieldElement> = Vec::with_capacity(m + 1);
    sigma.push(f.one());
    for k in 1..=m {
        let mut acc = f.zero();
        for i in 1..=k {
            let term = f.mul(&sigma[k - i], &power_sums[i - 1]);
            if i % 2 == 1 {
                f.add_assign(&mut acc, &term);
            } else {
                f.sub_assign(&mut acc, &term);
            }
        }
        sigma.push(f.div_by_int(&acc, k as u64)?);
    }
    sigma.remove(0);
    Ok(sigma)
}

/// `P(x) = Σ_k (-1)^k σ_k x^(m-k)`, lowest degree first; monic of degree `m`.
pub fn build_polynomial(f: &GaloisField, sigma: &[FieldElement]) -> Vec<FieldElement> {
    let m = sigma.len();
    let mut coeffs = vec![f.zero(); m + 1];
    coeffs[m] = f.one();
    for (idx, s) in sigma.iter().enumerate() {
        let k = idx + 1;
        coeffs[m - k] = if k % 2 == 0 { s.clone() } else { f.neg(s) };
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::eval;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn new_is_empty() {
        let sk = PowerSumSketch::new(4, 24);
        assert_eq!((sk.field().p(), sk.field().e()), (5, 2));
        assert_eq!(sk.count_stragglers(), 0);
        assert!(sk.list_stragglers().unwrap().is_empty());
        let eb = sk.field().params().element_bytes();
        assert_eq!(sk.serialize().len(), FIXED_HEADER_BYTES + 5 * eb + 8);
    }

    #[test]
    fn insert_single() {
        let mut sk = PowerSumSketch::new(6, 48);
        assert_eq!((sk.field().p(), sk.field().e()), (7, 2));
        sk.insert(5).unwrap();
        let f = sk.field().clone();
        let x = f.encode_id(5);
        assert_eq!(sk.count_stragglers(), 1);
        assert_eq!(sk.power_sums()[0], x);
        assert_eq!(sk.power_sums()[1], f.mul(&x, &x));
        sk.delete(5).unwrap();
        assert_eq!(sk, PowerSumSketch::new(6, 48));
    }

    #[test]
    fn two_three_over_gf25() {
        let mut sk = PowerSumSketch::new(4, 24);
        sk.insert(2).unwrap();
        sk.insert(3).unwrap();
        let f = sk.field().clone();
        assert!(sk.power_sums()[0].is_zero());
        assert_eq!(sk.power_sums()[1], f.constant(3));
        let sigma = sk.newton_elementary().unwrap();
        assert_eq!(sigma, vec![f.zero(), f.one()]);
        let p = build_polynomial(&f, &sigma);
        assert_eq!(p, vec![f.one(), f.zero(), f.one()]);
        assert!(eval(&f, &p, &f.constant(2)).is_zero());
        assert!(eval(&f, &p, &f.constant(3)).is_zero());
        assert_eq!(
            sk.list_stragglers().unwrap().into_ids(),
            BTreeSet::from([2, 3])
        );
    }

    #[test]
    fn newton_low_orders() {
        let sk = {
            let mut s = PowerSumSketch::new(4, 1000);
            s.insert(77).unwrap();
            s
        };
        let f = sk.field().clone();
        assert_eq!(
            sk.newton_elementary().unwrap(),
            vec![sk.power_sums()[0].clone()]
        );
        let mut sk2 = sk.clone();
        sk2.insert(401).unwrap();
        let sigma = sk2.newton_elementary().unwrap();
        let (s1, s2) = (&sk2.power_sums()[0], &sk2.power_sums()[1]);
        let expected = f.div_by_int(&f.sub(&f.mul(&sigma[0], s1), s2), 2).unwrap();
        assert_eq!(sigma[1], expected);
    }

    #[test]
    fn build_polynomial_edges() {
        let sk = PowerSumSketch::new(3, 100);
        let f = sk.field().clone();
        assert_eq!(build_polynomial(&f, &[]), vec![f.one()]);
        let x = f.encode_id(5);
        assert_eq!(
            build_polynomial(&f, std::slice::from_ref(&x)),
            vec![f.neg(&x), f.one()]
        );
    }

    #[test]
    fn counts() {
        let mut sk = PowerSumSketch::new(8, 1000);
        for x in [1, 2, 3] {
            sk.insert(x).unwrap();
        }
        assert_eq!(sk.count_stragglers(), 3);
        for x in [4, 5] {
            sk.insert(x).unwrap();
        }
        sk.delete(1).unwrap();
        sk.delete(4).unwrap();
        assert_eq!(sk.count_stragglers(), 3);
        assert_eq!(
            sk.list_stragglers().unwrap().into_ids(),
            BTreeSet::from([2, 3, 5])
        );
    }

    #[test]
    fn overflow() {
        let mut sk = PowerSumSketch::new(2, 1000);
        for x in [10, 20, 30] {
            sk.insert(x).unwrap();
        }
        assert_eq!(
            sk.list_stragglers(),
            Err(SketchError::Overflow { count: 3, d: 2 })
        );
    }

    #[test]
    fn out_of_range() {
        let mut sk = PowerSumSketch::new(2, 1000);
        assert_eq!(
            sk.insert(1001),
            Err(SketchError::IdentifierOutOfRange {
                id: 1001,
                n_bound: 1000
            })
        );
        assert_eq!(
            sk.delete(5000),
            Err(SketchError::IdentifierOutOfRange {
                id: 5000,
                n_bound: 1000
            })
        );
    }

    #[test]
    fn identifier_zero() {
        let mut sk = PowerSumSketch::new(4, 1000);
        sk.insert(0).unwrap();
        sk.insert(999).unwrap();
        assert_eq!(
            sk.list_stragglers().unwrap().into_ids(),
            BTreeSet::from([0, 999])
        );
    }

    #[test]
    fn bad_streams_are_detected() {
        // false deletion
        let mut sk = PowerSumSketch::new(4, 1000);
        sk.insert(10).unwrap();
        sk.insert(11).unwrap();
        sk.delete(12).unwrap();
        assert!(matches!(
            sk.list_stragglers(),
            Err(SketchError::DecodeFailure(_))
        ));
        // duplicate insertion
        let mut sk = PowerSumSketch::new(4, 1000);
        sk.insert(10).unwrap();
        sk.insert(10).unwrap();
        assert!(matches!(
            sk.list_stragglers(),
            Err(SketchError::DecodeFailure(_))
        ));
        // net negative
        let mut sk = PowerSumSketch::new(4, 1000);
        sk.delete(10).unwrap();
        assert!(matches!(
            sk.list_stragglers(),
            Err(SketchError::DecodeFailure(_))
        ));
        // count zero but residue present: insert 3, delete 5
        let mut sk = PowerSumSketch::new(4, 1000);
        sk.insert(3).unwrap();
        sk.delete(5).unwrap();
        assert!(matches!(
            sk.list_stragglers(),
            Err(SketchError::DecodeFailure(_))
        ));
    }

    #[test]
    fn combine_matches_single_stream() {
        let mut a = PowerSumSketch::new(4, 1 << 20);
        let mut b = PowerSumSketch::new(4, 1 << 20);
        let mut all = PowerSumSketch::new(4, 1 << 20);
        for x in [5, 900, 77_000] {
            a.insert(x).unwrap();
            all.insert(x).unwrap();
        }
        b.insert(1234).unwrap();
        all.insert(1234).unwrap();
        a.combine(&b).unwrap();
        assert_eq!(a, all);
        assert_eq!(
            a.combine(&PowerSumSketch::new(5, 1 << 20)),
            Err(SketchError::ParamsMismatch)
        );
    }

    #[test]
    fn deserialize_rejects_garbage() {
        let sk = PowerSumSketch::new(4, 1000);
        let bytes = sk.serialize();
        assert!(matches!(
            PowerSumSketch::deserialize(&bytes[..10]),
            Err(SketchError::Wire(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(
            PowerSumSketch::deserialize(&extra),
            Err(SketchError::Wire(WireError::TrailingBytes(1)))
        );
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            PowerSumSketch::deserialize(&bad),
            Err(SketchError::Wire(WireError::BadMagic { .. }))
        ));
    }

    /// Brute-force σ_k: sum over all k-subsets of the product of their members.
    fn brute_elementary(f: &GaloisField, xs: &[FieldElement]) -> Vec<FieldElement> {
        let m = xs.len();
        let mut sigma = vec![f.zero(); m];
        for mask in 1u32..(1 << m) {
            let k = mask.count_ones() as usize;
            let prod = (0..m)
                .filter(|i| mask & (1 << i) != 0)
                .fold(f.one(), |acc, i| f.mul(&acc, &xs[i]));
            f.add_assign(&mut sigma[k - 1], &prod);
        }
        sigma
    }

    #[test]
    fn exhaustive_small_universe() {
        // every subset of size <= 3 of 0..=20, with d = 3
        let field = Arc::new(GaloisField::new(choose_field(3, 20)));
        for mask in 0u32..(1 << 21) {
            if mask.count_ones() > 3 {
                continue;
            }
            let mut sk = PowerSumSketch::with_field(field.clone(), 3);
            let set: BTreeSet<u64> = (0..21).filter(|i| mask & (1 << i) != 0).collect();
            for &x in &set {
                sk.insert(x).unwrap();
            }
            assert_eq!(sk.list_stragglers().unwrap().into_ids(), set);
        }
    }

    proptest! {
        #[test]
        fn newton_matches_brute_force(ids in proptest::collection::btree_set(0u64..1330, 0..=8)) {
            let f = GaloisField::new(FieldParams::new(11, 3, crate::field::find_irreducible(11, 3), 1330).unwrap());
            let xs: Vec<_> = ids.iter().map(|&x| f.encode_id(x)).collect();
            let sums: Vec<_> = (1..=xs.len() as u128)
                .map(|k| xs.iter().fold(f.zero(), |acc, x| f.add(&acc, &f.pow(x, k))))
                .collect();
            prop_assert_eq!(elementary_from_power_sums(&f, &sums).unwrap(), brute_elementary(&f, &xs));
        }

        #[test]
        fn matched_pairs_leave_residue(seed in any::<u64>(), d in 1usize..=6, residue in 0usize..=6) {
            let residue = residue.min(d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1u64 << 16;
            let mut sk = PowerSumSketch::new(d, n);
            let mut ops = Vec::new();
            let mut members = BTreeSet::new();
            while members.len() < 40 + residue {
                members.insert(rng.gen_range(0..=n));
            }
            let members: Vec<u64> = members.into_iter().collect();
            for &x in &members {
                ops.push((x, true));
            }
            for &x in &members[residue..] {
                ops.push((x, false));
            }
            ops.shuffle(&mut rng);
            // apply in an order where each delete follows its insert
            ops.sort_by_key(|&(_, ins)| !ins);
            for (x, ins) in ops {
                if ins { sk.insert(x).unwrap() } else { sk.delete(x).unwrap() }
            }
            let expected: BTreeSet<u64> = members[..residue].iter().copied().collect();
            prop_assert_eq!(sk.list_stragglers().unwrap().into_ids(), expected);
        }

        #[test]
        fn update_order_is_irrelevant(seed in any::<u64>(), xs in proptest::collection::vec((0u64..=5000, any::<bool>()), 1..60)) {
            let mut a = PowerSumSketch::new(5, 5000);
            for &(x, ins) in &xs {
                if ins { a.insert(x).unwrap() } else { a.delete(x).unwrap() }
            }
            let mut shuffled = xs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut b = PowerSumSketch::new(5, 5000);
            for &(x, ins) in &shuffled {
                if ins { b.insert(x).unwrap() } else { b.delete(x).unwrap() }
            }
            prop_assert_eq!(a.serialize(), b.serialize());
        }

        #[test]
        fn serialization_round_trip(xs in proptest::collection::vec(0u64..=1_000_000, 0..20), d in 1usize..20) {
            let mut sk = PowerSumSketch::new(d, 1_000_000);
            for &x in &xs {
                sk.insert(x).unwrap();
            }
            let bytes = sk.serialize();
            prop_assert_eq!(bytes.len(), sk.serialized_len());
            let back = PowerSumSketch::deserialize(&bytes).unwrap();
            prop_assert_eq!(back.serialize(), bytes);
            prop_assert_eq!(back, sk);
        }
    }
}
