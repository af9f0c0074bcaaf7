//! Straggler identification for round-trip data streams.
//!
//! Two structures answer "which identifiers are still outstanding?" after a
//! long stream of insertions and deletions, using space proportional to the
//! number of stragglers rather than to the stream:
//!
//! * [`sketch::PowerSumSketch`] is deterministic. It keeps power sums over a
//!   finite field and decodes them with Newton's identities and polynomial
//!   root finding. It assumes every deletion matches an earlier insertion.
//! * [`ibf::InvertibleBloomFilter`] is randomized and tolerates false
//!   deletions, reporting them as negative multiplicities.
//!
//! [`reconcile`] builds two-party set reconciliation on the IBF, and
//! [`harness`] holds the op-stream format and the experiment drivers used by
//! the CLI.

pub mod field;
pub mod harness;
pub mod hashing;
pub mod ibf;
pub mod poly;
pub mod reconcile;
pub mod sketch;
pub mod wire;

pub use field::{choose_field, FieldElement, FieldParams, GaloisField};
pub use hashing::{HashConfig, HashMode};
pub use ibf::{DecodeResult, DecodeStatus, Epsilon, IbfError, IbfParams, InvertibleBloomFilter};
pub use reconcile::{
    diff_decode, encode_set, session_roundtrip, ReconcileError, ReconcileSession, SetDifference,
};
pub use sketch::{PowerSumSketch, SketchError, StragglerList};
