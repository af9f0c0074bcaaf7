//! Univariate polynomials over GF(p^e) and root finding for polynomials that
//! split into distinct linear factors.
//!
//! Polynomials are dense coefficient vectors, lowest degree first, with no
//! trailing zeros (the zero polynomial is empty).

use crate::field::{FieldElement, GaloisField};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Poly = Vec<FieldElement>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RootFindingError {
    #[error("polynomial is not monic")]
    NotMonic,
    #[error("polynomial has a repeated root")]
    RepeatedRoot,
    #[error("polynomial does not split into linear factors")]
    DoesNotSplit,
    #[error("recovered roots do not reproduce the polynomial")]
    VerificationFailed,
}

// Upper bound on random shifts tried per split; each succeeds with
// probability about 1/2, so exhausting this means something is wrong.
const MAX_SPLIT_ATTEMPTS: usize = 200;

pub fn trim(mut a: Poly) -> Poly {
    while a.last().is_some_and(|c| c.is_zero()) {
        a.pop();
    }
    a
}

pub fn degree(a: &[FieldElement]) -> Option<usize> {
    a.len().checked_sub(1)
}

pub fn mul(f: &GaloisField, a: &[FieldElement], b: &[FieldElement]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![f.zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            let t = f.mul(x, y);
            f.add_assign(&mut out[i + j], &t);
        }
    }
    trim(out)
}

pub fn sub(f: &GaloisField, a: &[FieldElement], b: &[FieldElement]) -> Poly {
    let n = a.len().max(b.len());
    let zero = f.zero();
    let out = (0..n)
        .map(|i| f.sub(a.get(i).unwrap_or(&zero), b.get(i).unwrap_or(&zero)))
        .collect();
    trim(out)
}

/// Quotient and remainder; `b` must be nonzero.
pub fn divrem(f: &GaloisField, a: &[FieldElement], b: &[FieldElement]) -> (Poly, Poly) {
    assert!(!b.is_empty(), "polynomial division by zero");
    if a.len() < b.len() {
        return (vec![], a.to_vec());
    }
    let lead_inv = f.inv(b.last().unwrap()).unwrap();
    let mut r = a.to_vec();
    let mut q = vec![f.zero(); a.len() - b.len() + 1];
    for i in (0..q.len()).rev() {
        let c = f.mul(&r[i + b.len() - 1], &lead_inv);
        if c.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            let t = f.mul(&c, bj);
            f.sub_assign(&mut r[i + j], &t);
        }
        q[i] = c;
    }
    r.truncate(b.len() - 1);
    (trim(q), trim(r))
}

pub fn rem(f: &GaloisField, a: &[FieldElement], m: &[FieldElement]) -> Poly {
    divrem(f, a, m).1
}

/// Monic greatest common divisor.
pub fn gcd(f: &GaloisField, a: &[FieldElement], b: &[FieldElement]) -> Poly {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    while !b.is_empty() {
        let r = rem(f, &a, &b);
        a = std::mem::replace(&mut b, r);
    }
    make_monic(f, a)
}

pub fn make_monic(f: &GaloisField, a: Poly) -> Poly {
    match a.last() {
        None => a,
        Some(lead) => {
            let inv = f.inv(lead).unwrap();
            a.iter().map(|c| f.mul(c, &inv)).collect()
        }
    }
}

/// `base^exp mod m`.
pub fn powmod(f: &GaloisField, base: &[FieldElement], mut exp: u128, m: &[FieldElement]) -> Poly {
    let mut result = rem(f, &[f.one()], m);
    let mut b = rem(f, base, m);
    while exp > 0 {
        if exp & 1 == 1 {
            result = rem(f, &mul(f, &result, &b), m);
        }
        exp >>= 1;
        if exp > 0 {
            b = rem(f, &mul(f, &b, &b), m);
        }
    }
    result
}

pub fn eval(f: &GaloisField, a: &[FieldElement], x: &FieldElement) -> FieldElement {
    a.iter()
        .rev()
        .fold(f.zero(), |acc, c| f.add(&f.mul(&acc, x), c))
}

/// `Π (x - r)` over the given roots.
pub fn from_roots(f: &GaloisField, roots: &[FieldElement]) -> Poly {
    roots
        .iter()
        .fold(vec![f.one()], |acc, r| mul(f, &acc, &[f.neg(r), f.one()]))
}

/// Finds the roots of a monic polynomial that splits into distinct linear
/// factors. Degree one is solved directly, degree two by the quadratic
/// formula, and anything larger by a squarefree-split check followed by
/// randomized equal-degree splitting. Every answer is verified by
/// re-expanding `Π (x - r)`.
pub fn find_roots(
    f: &GaloisField,
    poly: &[FieldElement],
) -> Result<Vec<FieldElement>, RootFindingError> {
    let poly = trim(poly.to_vec());
    let Some(deg) = degree(&poly) else {
        return Err(RootFindingError::NotMonic);
    };
    if poly[deg] != f.one() {
        return Err(RootFindingError::NotMonic);
    }
    let mut roots = match deg {
        0 => vec![],
        1 => vec![f.neg(&poly[0])],
        2 => quadratic_roots(f, &poly)?,
        _ => {
            let x = vec![f.zero(), f.one()];
            let frob = powmod(f, &x, f.order(), &poly);
            if frob != x {
                // x^q - x is the product of all monic linear factors, each once
                return Err(RootFindingError::DoesNotSplit);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2007 ^ deg as u64);
            let mut out = Vec::with_capacity(deg);
            split(f, poly.clone(), &mut rng, &mut out)?;
            out
        }
    };
    roots.sort();
    if roots.windows(2).any(|w| w[0] == w[1]) {
        return Err(RootFindingError::RepeatedRoot);
    }
    if from_roots(f, &roots) != poly {
        return Err(RootFindingError::VerificationFailed);
    }
    Ok(roots)
}

fn quadratic_roots(
    f: &GaloisField,
    poly: &[FieldElement],
) -> Result<Vec<FieldElement>, RootFindingError> {
    let (c, b) = (&poly[0], &poly[1]);
    let disc = f.sub(&f.mul(b, b), &f.scale(c, 4));
    if disc.is_zero() {
        return Err(RootFindingError::RepeatedRoot);
    }
    let root = f.sqrt(&disc).ok_or(RootFindingError::DoesNotSplit)?;
    let minus_b = f.neg(b);
    // p is odd, so halving is always defined
    let half = |v: FieldElement| f.div_by_int(&v, 2).expect("odd characteristic");
    Ok(vec![
        half(f.add(&minus_b, &root)),
        half(f.sub(&minus_b, &root)),
    ])
}

fn random_element(f: &GaloisField, rng: &mut ChaCha8Rng) -> FieldElement {
    let coeffs: Vec<u32> = (0..f.e()).map(|_| rng.gen_range(0..f.p())).collect();
    f.element(&coeffs).unwrap()
}

fn split(
    f: &GaloisField,
    poly: Poly,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<FieldElement>,
) -> Result<(), RootFindingError> {
    match poly.len() {
        0 | 1 => return Ok(()),
        2 => {
            out.push(f.neg(&poly[0]));
            return Ok(());
        }
        _ => {}
    }
    let half_order = (f.order() - 1) / 2;
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        let shift = random_element(f, rng);
        let g = powmod(f, &[shift, f.one()], half_order, &poly);
        let g = sub(f, &g, &[f.one()]);
        let d = gcd(f, &poly, &g);
        if d.len() > 1 && d.len() < poly.len() {
            let (q, r) = divrem(f, &poly, &d);
            debug_assert!(r.is_empty());
            split(f, d, rng, out)?;
            return split(f, q, rng, out);
        }
    }
    Err(RootFindingError::DoesNotSplit)
}
