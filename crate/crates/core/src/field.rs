//! Arithmetic in GF(p^e).
//!
//! Values are polynomials of degree below `e` in an indeterminate θ with
//! coefficients in `[0, p)`, reduced modulo a monic irreducible `Z(θ)`.
//! The modulus is found by deterministic search, so a given `(d, n)` always
//! produces the same field and therefore the same sketch encoding.

use smallvec::{smallvec, SmallVec};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Largest characteristic supported. Keeps `(p - 1)^2` well inside a `u64`.
pub const MAX_CHARACTERISTIC: u64 = (1 << 31) - 1;

// extension degrees up to this are stored without heap allocation
const INLINE_COEFFS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("division by {k}, a multiple of the characteristic {p}")]
    DivisionByCharacteristic { k: u64, p: u32 },
    #[error("element encodes {value}, which exceeds the identifier bound {n_bound}")]
    NotAnIdentifier { value: u128, n_bound: u64 },
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),
    #[error("invalid element encoding: {0}")]
    InvalidElement(String),
}

/// The field `GF(p^e)` together with the identifier bound it was sized for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldParams {
    p: u32,
    e: usize,
    modulus: Vec<u32>,
    n_bound: u64,
}

impl FieldParams {
    /// Builds params from explicit parts, checking every invariant
    /// (including irreducibility of the modulus).
    pub fn new(p: u32, e: usize, modulus: Vec<u32>, n_bound: u64) -> Result<Self, FieldError> {
        if p <= 2 || !is_prime(p as u64) || p as u64 > MAX_CHARACTERISTIC {
            return Err(FieldError::InvalidParams(format!(
                "characteristic {p} is not an odd prime"
            )));
        }
        if e == 0 || modulus.len() != e {
            return Err(FieldError::InvalidParams(format!(
                "modulus has {} coefficients, expected e = {e}",
                modulus.len()
            )));
        }
        if modulus.iter().any(|&z| z >= p) {
            return Err(FieldError::InvalidParams(
                "modulus coefficient out of range".into(),
            ));
        }
        match checked_order(p, e) {
            Some(q) if q > n_bound as u128 => {}
            _ => {
                return Err(FieldError::InvalidParams(format!(
                    "{p}^{e} does not exceed n = {n_bound}"
                )))
            }
        }
        if !is_irreducible(p, &modulus) {
            return Err(FieldError::InvalidParams("modulus is reducible".into()));
        }
        Ok(Self {
            p,
            e,
            modulus,
            n_bound,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn e(&self) -> usize {
        self.e
    }

    /// Coefficients `Z_0..Z_{e-1}` of the modulus; the leading 1 is implicit.
    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    pub fn n_bound(&self) -> u64 {
        self.n_bound
    }

    /// Field order `p^e`.
    pub fn order(&self) -> u128 {
        (self.p as u128).pow(self.e as u32)
    }

    /// Bits per packed coefficient, `ceil(log2 p)`.
    pub fn coeff_bits(&self) -> u32 {
        32 - (self.p - 1).leading_zeros()
    }

    /// Bytes occupied by one element in canonical byte form.
    pub fn element_bytes(&self) -> usize {
        (self.e * self.coeff_bits() as usize).div_ceil(8)
    }
}

/// Picks the field for a sketch with straggler bound `d` over identifiers
/// `0..=n`: the smallest prime `p > max(d, 2)`, the smallest `e` with
/// `p^e > n`, and the first irreducible modulus in enumeration order.
///
/// Panics if `d` is too large for the supported characteristic range.
pub fn choose_field(d: u64, n: u64) -> FieldParams {
    assert!(d >= 1 && n >= 1, "choose_field needs d >= 1 and n >= 1");
    let mut p = d.max(2) + 1;
    while !is_prime(p) {
        p += 1;
    }
    assert!(p <= MAX_CHARACTERISTIC, "straggler bound {d} is too large");
    let p = p as u32;
    let mut e = 1usize;
    while (p as u128).pow(e as u32) <= n as u128 {
        e += 1;
    }
    let modulus = find_irreducible(p, e);
    FieldParams {
        p,
        e,
        modulus,
        n_bound: n,
    }
}

/// Returns the first monic irreducible polynomial of degree `e` over GF(p),
/// enumerating candidates by the integer `Z_0 + Z_1 p + ... + Z_{e-1} p^{e-1}`.
/// Only the low coefficients `Z_0..Z_{e-1}` are returned.
pub fn find_irreducible(p: u32, e: usize) -> Vec<u32> {
    assert!(e >= 1);
    let mut candidate = vec![0u32; e];
    loop {
        if is_irreducible(p, &candidate) {
            return candidate;
        }
        // odometer increment, least significant coefficient first
        let mut i = 0;
        loop {
            candidate[i] += 1;
            if candidate[i] < p {
                break;
            }
            candidate[i] = 0;
            i += 1;
            assert!(i < e, "no irreducible polynomial of degree {e} mod {p}");
        }
    }
}

/// Rabin's test for the monic polynomial `θ^e + Σ low[i] θ^i` over GF(p):
/// `θ^(p^e) ≡ θ` and `gcd(θ^(p^(e/q)) - θ, Z) = 1` for each prime `q | e`.
pub(crate) fn is_irreducible(p: u32, low: &[u32]) -> bool {
    let e = low.len();
    if e == 1 {
        return true;
    }
    let ring = QuotientRing::new(p, low);
    let mut theta = vec![0u32; e];
    theta[1] = 1;

    let frobenius_iter = |count: usize| {
        let mut x = theta.clone();
        for _ in 0..count {
            x = ring.pow_slice(&x, p as u128);
        }
        x
    };

    if frobenius_iter(e) != theta {
        return false;
    }
    let mut full = low.to_vec();
    full.push(1);
    for q in prime_factors(e as u64) {
        let mut h = frobenius_iter(e / q as usize);
        h[1] = (h[1] + p - 1) % p;
        let g = gfp_poly_gcd(p, trimmed(h), full.clone());
        if g.len() != 1 {
            return false;
        }
    }
    true
}

/// A field element: coefficients `x_0..x_{e-1}`, each in `[0, p)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    coeffs: SmallVec<[u32; INLINE_COEFFS]>,
}

impl FieldElement {
    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}θ")?,
                _ => write!(f, "{c}θ^{i}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Multiplication in GF(p)[θ] / (Z), irrespective of whether Z is irreducible.
#[derive(Debug, Clone)]
struct QuotientRing {
    p: u64,
    e: usize,
    neg_modulus: Vec<u64>,
    lazy: bool,
    // floor((2^64 - 1) / p) for Barrett reduction
    barrett: u64,
}

impl QuotientRing {
    fn new(p: u32, low: &[u32]) -> Self {
        let p = p as u64;
        let e = low.len();
        let neg_modulus = low.iter().map(|&z| (p - z as u64) % p).collect();
        // products and reduction terms can be summed unreduced: each slot
        // collects fewer than 2e terms below (p-1)^2
        let lazy = ((p - 1) * (p - 1)).checked_mul(2 * e as u64).is_some();
        Self {
            p,
            e,
            neg_modulus,
            lazy,
            barrett: u64::MAX / p,
        }
    }

    /// `x mod p`. The estimated quotient is at most one short.
    #[inline]
    fn reduce(&self, x: u64) -> u64 {
        let q = ((x as u128 * self.barrett as u128) >> 64) as u64;
        let r = x - q * self.p;
        if r >= self.p {
            r - self.p
        } else {
            r
        }
    }

    fn mul_slice(&self, a: &[u32], b: &[u32], out: &mut [u32]) {
        let e = self.e;
        let mut stack = [0u64; 2 * INLINE_COEFFS];
        let mut heap = Vec::new();
        let acc: &mut [u64] = if 2 * e - 1 <= stack.len() {
            &mut stack[..2 * e - 1]
        } else {
            heap.resize(2 * e - 1, 0);
            &mut heap
        };
        if self.lazy {
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0 {
                    continue;
                }
                let row = &mut acc[i..i + e];
                for (slot, &bj) in row.iter_mut().zip(b) {
                    *slot += ai as u64 * bj as u64;
                }
            }
            for j in (e..2 * e - 1).rev() {
                let c = self.reduce(acc[j]);
                if c == 0 {
                    continue;
                }
                for (slot, &nz) in acc[j - e..j].iter_mut().zip(&self.neg_modulus) {
                    *slot += c * nz;
                }
            }
        } else {
            for (i, &ai) in a.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    acc[i + j] = self.reduce(acc[i + j] + self.reduce(ai as u64 * bj as u64));
                }
            }
            for j in (e..2 * e - 1).rev() {
                let c = self.reduce(acc[j]);
                for (slot, &nz) in acc[j - e..j].iter_mut().zip(&self.neg_modulus) {
                    *slot = self.reduce(self.reduce(*slot) + self.reduce(c * nz));
                }
            }
        }
        for (o, &v) in out.iter_mut().zip(acc.iter()) {
            *o = self.reduce(v) as u32;
        }
    }

    fn pow_slice(&self, base: &[u32], mut k: u128) -> Vec<u32> {
        let mut result = vec![0u32; self.e];
        result[0] = 1;
        let mut b = base.to_vec();
        let mut tmp = vec![0u32; self.e];
        while k > 0 {
            if k & 1 == 1 {
                self.mul_slice(&result, &b, &mut tmp);
                std::mem::swap(&mut result, &mut tmp);
            }
            k >>= 1;
            if k > 0 {
                self.mul_slice(&b, &b, &mut tmp);
                std::mem::swap(&mut b, &mut tmp);
            }
        }
        result
    }
}

/// The field GF(p^e) with precomputed reduction data. Arithmetic methods
/// panic when handed an element of the wrong length, which can only happen
/// by mixing elements from different fields.
#[derive(Debug)]
pub struct GaloisField {
    params: FieldParams,
    ring: QuotientRing,
    nonresidue: OnceLock<FieldElement>,
}

impl Clone for GaloisField {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            ring: self.ring.clone(),
            nonresidue: OnceLock::new(),
        }
    }
}

impl PartialEq for GaloisField {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl Eq for GaloisField {}

impl GaloisField {
    pub fn new(params: FieldParams) -> Self {
        let ring = QuotientRing::new(params.p, &params.modulus);
        Self {
            params,
            ring,
            nonresidue: OnceLock::new(),
        }
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn p(&self) -> u32 {
        self.params.p
    }

    pub fn e(&self) -> usize {
        self.params.e
    }

    pub fn order(&self) -> u128 {
        self.params.order()
    }

    #[inline]
    fn check(&self, a: &FieldElement) {
        assert_eq!(
            a.coeffs.len(),
            self.params.e,
            "element does not belong to this field"
        );
    }

    pub fn zero(&self) -> FieldElement {
        let e = self.params.e;
        let coeffs = if e <= INLINE_COEFFS {
            SmallVec::from_buf_and_len([0; INLINE_COEFFS], e)
        } else {
            smallvec![0; e]
        };
        FieldElement { coeffs }
    }

    pub fn one(&self) -> FieldElement {
        self.constant(1)
    }

    /// The integer `k mod p` embedded as a constant.
    pub fn constant(&self, k: u64) -> FieldElement {
        let mut z = self.zero();
        z.coeffs[0] = (k % self.params.p as u64) as u32;
        z
    }

    /// Builds an element from explicit coefficients, low degree first.
    pub fn element(&self, coeffs: &[u32]) -> Result<FieldElement, FieldError> {
        if coeffs.len() != self.params.e {
            return Err(FieldError::InvalidElement(format!(
                "expected {} coefficients, got {}",
                self.params.e,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|&c| c >= self.params.p) {
            return Err(FieldError::InvalidElement(
                "coefficient not reduced mod p".into(),
            ));
        }
        Ok(FieldElement {
            coeffs: SmallVec::from_slice(coeffs),
        })
    }

    pub fn add(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        let mut out = a.clone();
        self.add_assign(&mut out, b);
        out
    }

    pub fn add_assign(&self, a: &mut FieldElement, b: &FieldElement) {
        self.check(a);
        self.check(b);
        let p = self.params.p;
        for (x, &y) in a.coeffs.iter_mut().zip(b.coeffs.iter()) {
            let s = *x + y;
            *x = if s >= p { s - p } else { s };
        }
    }

    pub fn sub(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        let mut out = a.clone();
        self.sub_assign(&mut out, b);
        out
    }

    pub fn sub_assign(&self, a: &mut FieldElement, b: &FieldElement) {
        self.check(a);
        self.check(b);
        let p = self.params.p;
        for (x, &y) in a.coeffs.iter_mut().zip(b.coeffs.iter()) {
            *x = if *x >= y { *x - y } else { *x + p - y };
        }
    }

    pub fn neg(&self, a: &FieldElement) -> FieldElement {
        self.sub(&self.zero(), a)
    }

    pub fn mul(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        self.check(a);
        self.check(b);
        let mut out = self.zero();
        self.ring.mul_slice(&a.coeffs, &b.coeffs, &mut out.coeffs);
        out
    }

    /// Multiplies by an integer, i.e. adds `a` to itself `k` times.
    pub fn scale(&self, a: &FieldElement, k: u64) -> FieldElement {
        self.check(a);
        let p = self.params.p as u64;
        let k = k % p;
        let mut out = a.clone();
        for c in out.coeffs.iter_mut() {
            *c = ((*c as u64 * k) % p) as u32;
        }
        out
    }

    /// Divides by the integer `k`, coefficient by coefficient.
    pub fn div_by_int(&self, a: &FieldElement, k: u64) -> Result<FieldElement, FieldError> {
        let p = self.params.p;
        let k_mod = k % p as u64;
        if k_mod == 0 {
            return Err(FieldError::DivisionByCharacteristic { k, p });
        }
        let inv = mod_inverse(k_mod, p as u64);
        Ok(self.scale(a, inv))
    }

    pub fn pow(&self, a: &FieldElement, k: u128) -> FieldElement {
        self.check(a);
        FieldElement {
            coeffs: SmallVec::from_vec(self.ring.pow_slice(&a.coeffs, k)),
        }
    }

    /// Multiplicative inverse by the extended Euclidean algorithm against Z.
    /// Returns `None` for zero.
    pub fn inv(&self, a: &FieldElement) -> Option<FieldElement> {
        self.check(a);
        if a.is_zero() {
            return None;
        }
        let p = self.params.p;
        let mut modulus = self.params.modulus.clone();
        modulus.push(1);
        // invariant: s_i * a ≡ r_i (mod Z)
        let (mut r0, mut r1) = (modulus, trimmed(a.coeffs.to_vec()));
        let (mut s0, mut s1): (Vec<u32>, Vec<u32>) = (vec![], vec![1]);
        while !(r1.len() == 1 && r1[0] != 0) {
            let (q, r) = gfp_poly_divrem(p, &r0, &r1);
            let s2 = gfp_poly_sub(p, &s0, &gfp_poly_mul(p, &q, &s1));
            r0 = std::mem::replace(&mut r1, r);
            s0 = std::mem::replace(&mut s1, s2);
        }
        let c = mod_inverse(r1[0] as u64, p as u64);
        let mut out = self.zero();
        for (o, &s) in out.coeffs.iter_mut().zip(s1.iter()) {
            *o = ((s as u64 * c) % p as u64) as u32;
        }
        Some(out)
    }

    /// Square root via Tonelli–Shanks, or `None` for non-squares.
    pub fn sqrt(&self, a: &FieldElement) -> Option<FieldElement> {
        if a.is_zero() {
            return Some(self.zero());
        }
        let q = self.order();
        let one = self.one();
        if self.pow(a, (q - 1) / 2) != one {
            return None;
        }
        let mut s = 0u32;
        let mut t = q - 1;
        while t.is_multiple_of(2) {
            t /= 2;
            s += 1;
        }
        let z = self.nonresidue();
        let mut m = s;
        let mut c = self.pow(z, t);
        let mut x = self.pow(a, t.div_ceil(2));
        let mut b = self.pow(a, t);
        while b != one {
            let mut i = 0;
            let mut b2 = b.clone();
            while b2 != one {
                b2 = self.mul(&b2, &b2);
                i += 1;
            }
            let mut factor = c.clone();
            for _ in 0..(m - i - 1) {
                factor = self.mul(&factor, &factor);
            }
            x = self.mul(&x, &factor);
            c = self.mul(&factor, &factor);
            b = self.mul(&b, &c);
            m = i;
        }
        Some(x)
    }

    fn nonresidue(&self) -> &FieldElement {
        self.nonresidue.get_or_init(|| {
            let q = self.order();
            let minus_one = self.neg(&self.one());
            (1..q)
                .map(|v| self.encode_value(v))
                .find(|z| self.pow(z, (q - 1) / 2) == minus_one)
                .expect("odd-order field has a non-residue")
        })
    }

    fn encode_value(&self, mut v: u128) -> FieldElement {
        let p = self.params.p as u128;
        let mut out = self.zero();
        for c in out.coeffs.iter_mut() {
            *c = (v % p) as u32;
            v /= p;
        }
        debug_assert_eq!(v, 0);
        out
    }

    /// Interprets an identifier as the element whose coefficients are its
    /// base-p digits. Panics if `x >= p^e`.
    pub fn encode_id(&self, x: u64) -> FieldElement {
        assert!(
            (x as u128) < self.order(),
            "identifier {x} does not fit the field"
        );
        let p = self.params.p as u64;
        let mut v = x;
        let mut out = self.zero();
        for c in out.coeffs.iter_mut() {
            *c = (v % p) as u32;
            v /= p;
        }
        out
    }

    /// Inverse of [`encode_id`](Self::encode_id), rejecting values above the bound `n`.
    pub fn decode_id(&self, a: &FieldElement) -> Result<u64, FieldError> {
        self.check(a);
        let p = self.params.p as u128;
        let value = a
            .coeffs
            .iter()
            .rev()
            .fold(0u128, |acc, &c| acc * p + c as u128);
        if value > self.params.n_bound as u128 {
            return Err(FieldError::NotAnIdentifier {
                value,
                n_bound: self.params.n_bound,
            });
        }
        Ok(value as u64)
    }

    /// Appends the canonical byte form: coefficients packed LSB-first at
    /// `ceil(log2 p)` bits each, padded to a whole byte.
    pub fn write_element(&self, a: &FieldElement, out: &mut Vec<u8>) {
        self.check(a);
        let mut w = crate::wire::BitWriter::new(out);
        let bits = self.params.coeff_bits();
        for &c in a.coeffs.iter() {
            w.write(c as u64, bits);
        }
        w.finish();
    }

    pub fn read_element(&self, bytes: &[u8]) -> Result<FieldElement, FieldError> {
        if bytes.len() != self.params.element_bytes() {
            return Err(FieldError::InvalidElement(format!(
                "expected {} bytes, got {}",
                self.params.element_bytes(),
                bytes.len()
            )));
        }
        let mut r = crate::wire::BitReader::new(bytes);
        let bits = self.params.coeff_bits();
        let coeffs: Vec<u32> = (0..self.params.e).map(|_| r.read(bits) as u32).collect();
        self.element(&coeffs)
    }
}

fn checked_order(p: u32, e: usize) -> Option<u128> {
    (p as u128).checked_pow(u32::try_from(e).ok()?)
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut i = 2u64;
    while i * i <= n {
        if n.is_multiple_of(i) {
            return false;
        }
        i += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n.is_multiple_of(f) {
            out.push(f);
            while n.is_multiple_of(f) {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub(crate) fn mod_inverse(a: u64, p: u64) -> u64 {
    let (mut old_r, mut r) = (a as i128, p as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    debug_assert_eq!(old_r, 1, "{a} not invertible mod {p}");
    old_s.rem_euclid(p as i128) as u64
}

// Dense polynomials over GF(p), low degree first, no trailing zeros except
// that the zero polynomial is empty.

fn trimmed(mut v: Vec<u32>) -> Vec<u32> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

fn gfp_poly_sub(p: u32, a: &[u32], b: &[u32]) -> Vec<u32> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| {
            let x = *a.get(i).unwrap_or(&0);
            let y = *b.get(i).unwrap_or(&0);
            (x + p - y) % p
        })
        .collect();
    trimmed(out)
}

fn gfp_poly_mul(p: u32, a: &[u32], b: &[u32]) -> Vec<u32> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let p64 = p as u64;
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x as u64 * y as u64) % p64;
        }
    }
    trimmed(out.into_iter().map(|v| v as u32).collect())
}

fn gfp_poly_divrem(p: u32, a: &[u32], b: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let b = trimmed(b.to_vec());
    assert!(!b.is_empty(), "polynomial division by zero");
    let p64 = p as u64;
    let mut r: Vec<u64> = a.iter().map(|&x| x as u64).collect();
    if r.len() < b.len() {
        return (vec![], trimmed(a.to_vec()));
    }
    let lead_inv = mod_inverse(*b.last().unwrap() as u64, p64);
    let mut q = vec![0u32; r.len() - b.len() + 1];
    for i in (0..q.len()).rev() {
        let c = (r[i + b.len() - 1] * lead_inv) % p64;
        q[i] = c as u32;
        if c == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            r[i + j] = (r[i + j] + p64 - (c * bj as u64) % p64) % p64;
        }
    }
    r.truncate(b.len() - 1);
    (
        trimmed(q),
        trimmed(r.into_iter().map(|v| v as u32).collect()),
    )
}

fn gfp_poly_gcd(p: u32, mut a: Vec<u32>, mut b: Vec<u32>) -> Vec<u32> {
    while !b.is_empty() {
        let (_, r) = gfp_poly_divrem(p, &a, &b);
        a = std::mem::replace(&mut b, r);
    }
    if let Some(&lead) = a.last() {
        let inv = mod_inverse(lead as u64, p as u64);
        for c in a.iter_mut() {
            *c = ((*c as u64 * inv) % p as u64) as u32;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(p: u32, e: usize, n: u64) -> GaloisField {
        GaloisField::new(FieldParams::new(p, e, find_irreducible(p, e), n).unwrap())
    }

    /// Naive product: full convolution, then long division by Z.
    fn oracle_mul(p: u32, modulus: &[u32], a: &[u32], b: &[u32]) -> Vec<u32> {
        let mut z = modulus.to_vec();
        z.push(1);
        let prod = gfp_poly_mul(p, &trimmed(a.to_vec()), &trimmed(b.to_vec()));
        let (_, mut r) = gfp_poly_divrem(p, &prod, &z);
        r.resize(modulus.len(), 0);
        r
    }

    /// Brute-force irreducibility: no monic factor of degree 1..=e/2.
    fn brute_irreducible(p: u32, low: &[u32]) -> bool {
        let e = low.len();
        let mut full = low.to_vec();
        full.push(1);
        for deg in 1..=e / 2 {
            let count = (p as u64).pow(deg as u32);
            for v in 0..count {
                let mut f = Vec::with_capacity(deg + 1);
                let mut x = v;
                for _ in 0..deg {
                    f.push((x % p as u64) as u32);
                    x /= p as u64;
                }
                f.push(1);
                let (_, r) = gfp_poly_divrem(p, &full, &f);
                if r.is_empty() {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn choose_field_examples() {
        let f = choose_field(2, 24);
        assert_eq!((f.p(), f.e()), (3, 3));
        let f = choose_field(4, 24);
        assert_eq!((f.p(), f.e()), (5, 2));
        let f = choose_field(16, 1_000_000);
        assert!(17u64.pow(5) > 1_000_000 && 17u64.pow(4) < 1_000_000);
        assert_eq!((f.p(), f.e()), (17, 5));
        assert_eq!(choose_field(1, 1).p(), 3);
        assert_eq!(choose_field(16, 1_000_000), choose_field(16, 1_000_000));
    }

    #[test]
    fn irreducible_gf2_cubic() {
        // Rabin's test is written for odd p but holds for p = 2 as well.
        assert_eq!(find_irreducible(2, 3), vec![1, 1, 0]);
        assert!(brute_irreducible(2, &[1, 1, 0]));
        for low in [[0, 0, 0], [1, 0, 0], [0, 1, 0]] {
            assert!(!brute_irreducible(2, &low));
        }
    }

    #[test]
    fn degree_one_modulus_is_theta() {
        for p in [3, 5, 7, 101] {
            assert_eq!(find_irreducible(p, 1), vec![0]);
        }
    }

    #[test]
    fn least_irreducible_quadratic_mod_5() {
        // brute force over all 25 monic quadratics: first one with no root
        let mut expected = None;
        'outer: for v in 0..25u32 {
            let (z0, z1) = (v % 5, v / 5);
            for x in 0..5 {
                if (x * x + z1 * x + z0) % 5 == 0 {
                    continue 'outer;
                }
            }
            expected = Some(vec![z0, z1]);
            break;
        }
        assert_eq!(Some(find_irreducible(5, 2)), expected);
        assert_eq!(find_irreducible(5, 2), vec![2, 0]);
    }

    #[test]
    fn rabin_matches_brute_force() {
        for (p, e) in [
            (3u32, 2usize),
            (3, 3),
            (3, 4),
            (5, 2),
            (5, 3),
            (7, 2),
            (3, 6),
        ] {
            let count = (p as u64).pow(e as u32);
            for v in 0..count {
                let mut low = Vec::new();
                let mut x = v;
                for _ in 0..e {
                    low.push((x % p as u64) as u32);
                    x /= p as u64;
                }
                assert_eq!(
                    is_irreducible(p, &low),
                    brute_irreducible(p, &low),
                    "p={p} low={low:?}"
                );
            }
        }
    }

    #[test]
    fn gf2_3_theta_squared() {
        // GF(2^3) lies outside the sketch's p > 2 range, so use the ring directly.
        let ring = QuotientRing::new(2, &[1, 1, 0]);
        let mut out = [0u32; 3];
        ring.mul_slice(&[0, 0, 1], &[0, 0, 1], &mut out);
        assert_eq!(out, [0, 1, 1]);
        assert_eq!(
            oracle_mul(2, &[1, 1, 0], &[0, 0, 1], &[0, 0, 1]),
            vec![0, 1, 1]
        );
        assert_eq!(ring.pow_slice(&[0, 1, 0], 4), vec![0, 1, 1]);
    }

    #[test]
    fn gf25_examples() {
        let f = field(5, 2, 24);
        let a = f.element(&[2, 3]).unwrap();
        let b = f.element(&[4, 4]).unwrap();
        assert_eq!(f.add(&a, &b).coeffs(), &[1, 2]);
        assert_eq!(f.add(&a, &f.zero()), a);
        let c = f.element(&[3, 1]).unwrap();
        let half = f.div_by_int(&c, 2).unwrap();
        assert_eq!(half.coeffs(), &[4, 3]);
        assert_eq!(f.add(&half, &half), c);
        assert_eq!(f.div_by_int(&c, 1).unwrap(), c);
        assert_eq!(
            f.div_by_int(&c, 5),
            Err(FieldError::DivisionByCharacteristic { k: 5, p: 5 })
        );
        assert_eq!(f.encode_id(13).coeffs(), &[3, 2]);
        assert!(f.encode_id(0).is_zero());
    }

    #[test]
    fn pow_edges() {
        let f = field(7, 3, 300);
        let a = f.element(&[3, 5, 1]).unwrap();
        assert_eq!(f.pow(&a, 0), f.one());
        assert_eq!(f.pow(&a, 1), a);
    }

    #[test]
    fn mul_matches_oracle_exhaustively() {
        for (p, e) in [
            (3u32, 2usize),
            (3, 3),
            (5, 2),
            (5, 3),
            (7, 2),
            (3, 5),
            (11, 2),
            (13, 2),
        ] {
            let f = field(p, e, 1);
            let q = f.order() as u64;
            assert!(q <= 512);
            for x in 0..q {
                for y in 0..q {
                    let a = f.encode_id(x);
                    let b = f.encode_id(y);
                    let got = f.mul(&a, &b);
                    assert_eq!(
                        got.coeffs(),
                        oracle_mul(p, f.params().modulus(), a.coeffs(), b.coeffs())
                    );
                }
            }
        }
    }

    #[test]
    fn large_characteristic_mul_matches_oracle() {
        // p large enough to force the non-lazy accumulation path; the ring
        // does not need an irreducible modulus
        let p = 2_147_483_647u32;
        let modulus = [3, 1, 4, 1, p - 5];
        let ring = QuotientRing::new(p, &modulus);
        assert!(!ring.lazy);
        let a = [p - 1, p - 2, p - 3, 7, p - 1];
        let b = [p - 5, 12345, p - 1, p - 1, 99];
        let mut out = [0u32; 5];
        ring.mul_slice(&a, &b, &mut out);
        assert_eq!(out.to_vec(), oracle_mul(p, &modulus, &a, &b));
    }

    #[test]
    fn sqrt_of_squares() {
        let f = field(5, 2, 24);
        for x in 0..25 {
            let a = f.encode_id(x);
            let sq = f.mul(&a, &a);
            let r = f.sqrt(&sq).unwrap();
            assert_eq!(f.mul(&r, &r), sq);
        }
        // half of the nonzero elements are non-squares
        let non_squares = (1..25)
            .filter(|&x| f.sqrt(&f.encode_id(x)).is_none())
            .count();
        assert_eq!(non_squares, 12);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let f = field(5, 2, 20);
        assert_eq!(
            f.decode_id(&f.encode_value(24)),
            Err(FieldError::NotAnIdentifier {
                value: 24,
                n_bound: 20
            })
        );
        assert_eq!(f.decode_id(&f.encode_id(20)), Ok(20));
    }

    #[test]
    #[should_panic(expected = "does not belong")]
    fn mismatched_fields_panic() {
        let f = field(5, 2, 24);
        let g = field(5, 3, 100);
        f.add(&f.one(), &g.one());
    }

    #[test]
    fn params_validation() {
        assert!(FieldParams::new(5, 2, vec![0, 0], 24).is_err()); // θ^2 is reducible
        assert!(FieldParams::new(5, 2, vec![2, 0], 25).is_err()); // 25 > n fails
        assert!(FieldParams::new(4, 2, vec![2, 0], 10).is_err());
        assert!(FieldParams::new(2, 3, vec![1, 1, 0], 5).is_err());
        assert!(FieldParams::new(5, 2, vec![2, 0], 24).is_ok());
    }

    proptest! {
        #[test]
        fn barrett_matches_remainder(x in any::<u64>(), p in 3u32..=MAX_CHARACTERISTIC as u32) {
            let ring = QuotientRing::new(p, &[1]);
            prop_assert_eq!(ring.reduce(x), x % p as u64);
        }

        #[test]
        fn field_axioms(seed in 0usize..4, xs in proptest::collection::vec(any::<u64>(), 3)) {
            let (p, e) = [(3u32, 4usize), (7, 3), (17, 5), (101, 2)][seed];
            let f = field(p, e, 1);
            let q = f.order() as u64;
            let (a, b, c) = (f.encode_id(xs[0] % q), f.encode_id(xs[1] % q), f.encode_id(xs[2] % q));
            prop_assert_eq!(f.add(&a, &b), f.add(&b, &a));
            prop_assert_eq!(f.mul(&a, &b), f.mul(&b, &a));
            prop_assert_eq!(f.add(&f.add(&a, &b), &c), f.add(&a, &f.add(&b, &c)));
            prop_assert_eq!(f.mul(&f.mul(&a, &b), &c), f.mul(&a, &f.mul(&b, &c)));
            prop_assert_eq!(f.mul(&a, &f.add(&b, &c)), f.add(&f.mul(&a, &b), &f.mul(&a, &c)));
            prop_assert_eq!(f.mul(&a, &f.one()), a.clone());
            prop_assert!(f.add(&a, &f.neg(&a)).is_zero());
            prop_assert_eq!(f.sub(&f.add(&a, &b), &b), a.clone());
            prop_assert_eq!(f.add(&f.sub(&a, &b), &b), a.clone());
            if !a.is_zero() {
                let fermat = f.pow(&a, f.order() - 2);
                prop_assert_eq!(f.mul(&a, &fermat), f.one());
                prop_assert_eq!(f.inv(&a), Some(fermat));
            }
        }

        #[test]
        fn encode_round_trip(x in 0u64..=1_000_000) {
            let f = GaloisField::new(choose_field(16, 1_000_000));
            prop_assert_eq!(f.decode_id(&f.encode_id(x)), Ok(x));
        }

        #[test]
        fn byte_form_round_trip(coeffs in proptest::collection::vec(0u32..17, 5)) {
            let f = GaloisField::new(choose_field(16, 1 << 20));
            let a = f.element(&coeffs).unwrap();
            let mut buf = Vec::new();
            f.write_element(&a, &mut buf);
            prop_assert_eq!(buf.len(), f.params().element_bytes());
            prop_assert_eq!(f.read_element(&buf).unwrap(), a);
        }
    }
}
