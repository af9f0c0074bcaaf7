//! Two-party set reconciliation over the invertible Bloom filter.
//!
//! The remote party encodes its set and ships the serialized filter. The
//! local party subtracts its own set and decodes: positive multiplicities are
//! remote-only elements, negative ones local-only.

use crate::ibf::{DecodeStatus, IbfError, IbfParams, InvertibleBloomFilter};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconcileError {
    #[error(transparent)]
    Ibf(#[from] IbfError),
    #[error("decode incomplete; retry with a larger d or m")]
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    LocalOnly,
    RemoteOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SetDifference {
    pub remote_only: BTreeSet<u64>,
    pub local_only: BTreeSet<u64>,
}

impl SetDifference {
    pub fn len(&self) -> usize {
        self.remote_only.len() + self.local_only.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every element tagged with the side holding it.
    pub fn tagged(&self) -> impl Iterator<Item = (u64, Side)> + '_ {
        self.remote_only
            .iter()
            .map(|&x| (x, Side::RemoteOnly))
            .chain(self.local_only.iter().map(|&x| (x, Side::LocalOnly)))
    }
}

/// Filter holding each element of `set` once.
pub fn encode_set<I>(params: &IbfParams, set: I) -> Result<InvertibleBloomFilter, IbfError>
where
    I: IntoIterator<Item = u64>,
{
    let mut f = InvertibleBloomFilter::new(params.clone());
    for x in set {
        f.insert(x)?;
    }
    Ok(f)
}

/// Deletes `local` from a copy of `remote` and decodes the remainder.
pub fn diff_decode<I>(
    remote: &InvertibleBloomFilter,
    local: I,
) -> Result<SetDifference, ReconcileError>
where
    I: IntoIterator<Item = u64>,
{
    let mut work = remote.clone();
    for x in local {
        work.delete(x)?;
    }
    split_decoded(&work)
}

fn split_decoded(f: &InvertibleBloomFilter) -> Result<SetDifference, ReconcileError> {
    let r = f.list_stragglers();
    if r.status == DecodeStatus::Incomplete {
        return Err(ReconcileError::Failure);
    }
    Ok(SetDifference {
        remote_only: r.stragglers().collect(),
        local_only: r.false_deletions().collect(),
    })
}

/// Local half of a session: shared parameters plus the local set.
#[derive(Debug, Clone)]
pub struct ReconcileSession {
    params: IbfParams,
    local: BTreeSet<u64>,
}

impl ReconcileSession {
    pub fn new(params: IbfParams, local: BTreeSet<u64>) -> Self {
        Self { params, local }
    }

    pub fn params(&self) -> &IbfParams {
        &self.params
    }

    pub fn local_set(&self) -> &BTreeSet<u64> {
        &self.local
    }

    /// The message this party would send.
    pub fn encode(&self) -> Result<Vec<u8>, IbfError> {
        Ok(encode_set(&self.params, self.local.iter().copied())?.serialize())
    }

    /// Decodes a peer's message against the local set. The peer must have
    /// used identical parameters, seed included.
    pub fn receive(&self, message: &[u8]) -> Result<SetDifference, ReconcileError> {
        let remote = InvertibleBloomFilter::deserialize(message)?;
        if remote.params() != &self.params {
            return Err(IbfError::ParamsMismatch.into());
        }
        diff_decode(&remote, self.local.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Complete,
    Failure,
}

/// Outcome of a simulated exchange from `A` (remote) to `B` (local).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionReport {
    pub size_a: usize,
    pub size_b: usize,
    pub d: u32,
    pub epsilon: String,
    pub k: u16,
    pub m: u32,
    pub bytes: usize,
    pub status: SessionStatus,
    pub a_only: Vec<u64>,
    pub b_only: Vec<u64>,
}

/// Encodes `a`, serializes, deserializes on the other side and diffs against `b`.
pub fn session_roundtrip(
    a: &BTreeSet<u64>,
    b: &BTreeSet<u64>,
    params: &IbfParams,
) -> Result<SessionReport, IbfError> {
    let message = ReconcileSession::new(params.clone(), a.clone()).encode()?;
    let outcome = ReconcileSession::new(params.clone(), b.clone()).receive(&message);
    let (status, diff) = match outcome {
        Ok(diff) => (SessionStatus::Complete, diff),
        Err(ReconcileError::Failure) => (SessionStatus::Failure, SetDifference::default()),
        Err(ReconcileError::Ibf(e)) => return Err(e),
    };
    Ok(SessionReport {
        size_a: a.len(),
        size_b: b.len(),
        d: params.d(),
        epsilon: params.epsilon().to_string(),
        k: params.k(),
        m: params.m(),
        bytes: message.len(),
        status,
        a_only: diff.remote_only.into_iter().collect(),
        b_only: diff.local_only.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::HashMode;
    use crate::ibf::Epsilon;
    use proptest::prelude::*;

    fn params(d: u32, seed: u8) -> IbfParams {
        IbfParams::new(
            d,
            Epsilon::new(1, 16).unwrap(),
            1 << 24,
            HashMode::Default,
            [seed; 16],
        )
        .unwrap()
    }

    #[test]
    fn trivial_cases() {
        let p = params(8, 1);
        assert!(encode_set(&p, []).unwrap().is_empty());
        let one = encode_set(&p, [77]).unwrap();
        assert_eq!(
            diff_decode(&one, []).unwrap().remote_only,
            BTreeSet::from([77])
        );
        let a: BTreeSet<u64> = (0..1000).collect();
        assert!(diff_decode(&encode_set(&p, a.clone()).unwrap(), a)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn one_extra_on_remote() {
        let p = params(8, 1);
        let b: BTreeSet<u64> = (100..600).collect();
        let mut a = b.clone();
        a.insert(5);
        let diff = diff_decode(&encode_set(&p, a).unwrap(), b).unwrap();
        assert_eq!(diff.remote_only, BTreeSet::from([5]));
        assert!(diff.local_only.is_empty());
        assert_eq!(
            diff.tagged().collect::<Vec<_>>(),
            vec![(5, Side::RemoteOnly)]
        );
    }

    #[test]
    fn mismatched_seed_rejected() {
        let msg = ReconcileSession::new(params(8, 1), BTreeSet::from([1, 2]))
            .encode()
            .unwrap();
        let other = ReconcileSession::new(params(8, 2), BTreeSet::from([1]));
        assert_eq!(
            other.receive(&msg),
            Err(ReconcileError::Ibf(IbfError::ParamsMismatch))
        );
    }

    #[test]
    fn oversized_difference_is_not_silently_wrong() {
        let p = params(4, 3);
        let a: BTreeSet<u64> = (0..400).collect();
        let b: BTreeSet<u64> = (200..600).collect();
        let report = session_roundtrip(&a, &b, &p).unwrap();
        if report.status == SessionStatus::Complete {
            assert_eq!(report.a_only, (0..200).collect::<Vec<_>>());
            assert_eq!(report.b_only, (400..600).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bytes_depend_only_on_params() {
        let p = params(8, 1);
        let small = session_roundtrip(&BTreeSet::from([1]), &BTreeSet::new(), &p).unwrap();
        let big = session_roundtrip(&(0..5000).collect(), &(3..5002).collect(), &p).unwrap();
        assert_eq!(small.bytes, big.bytes);
        assert_eq!(small.bytes, p.serialized_len());
    }

    proptest! {
        #[test]
        fn small_differences_and_subtract_agree(
            common in proptest::collection::btree_set(0u64..1 << 24, 0..200),
            a_extra in proptest::collection::btree_set(0u64..1 << 24, 0..4),
            b_extra in proptest::collection::btree_set(0u64..1 << 24, 0..4),
        ) {
            let a: BTreeSet<u64> = common.union(&a_extra).copied().collect();
            let b: BTreeSet<u64> = common.union(&b_extra).copied().collect();
            let p = params(8, 4);
            let ea = encode_set(&p, a.iter().copied()).unwrap();
            let eb = encode_set(&p, b.iter().copied()).unwrap();
            let via_delete = diff_decode(&ea, b.iter().copied());
            let via_subtract = split_decoded(&ea.subtract(&eb).unwrap());
            prop_assert_eq!(&via_delete, &via_subtract);
            if let Ok(diff) = via_delete {
                prop_assert_eq!(diff.remote_only, a.difference(&b).copied().collect::<BTreeSet<_>>());
                prop_assert_eq!(diff.local_only, b.difference(&a).copied().collect::<BTreeSet<_>>());
            }
        }

        #[test]
        fn encode_is_additive(set in proptest::collection::btree_set(0u64..1 << 24, 0..100), cut in 0usize..100) {
            let p = params(8, 5);
            let v: Vec<u64> = set.iter().copied().collect();
            let cut = cut.min(v.len());
            let whole = encode_set(&p, v.iter().copied()).unwrap();
            let parts = encode_set(&p, v[..cut].iter().copied()).unwrap()
                .merge(&encode_set(&p, v[cut..].iter().copied()).unwrap()).unwrap();
            prop_assert_eq!(whole, parts);
        }
    }
}
