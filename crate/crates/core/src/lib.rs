//! Protocol stack and deterministic network laboratory for asynchronous
//! Byzantine agreement over inferable verifiable secret sharing.
//!
//! The crate is organized bottom-up:
//!
//! * [`field`] / [`poly`] — prime-field arithmetic and symmetric bivariate
//!   polynomial interpolation,
//! * [`acast`] — Bracha reliable broadcast as a reusable state machine,
//! * [`ivss`] — secret sharing, reconstruction, and the round-history
//!   certification protocol with faulty-pair inference,
//! * [`icc`] — the inferable common coin,
//! * [`vote`] / [`aba`] — graded voting and the agreement loop,
//! * [`process`] — one simulated process composing all of the above,
//! * [`simnet`] — deterministic scheduler, adversary scripts, run metrics,
//!   and schedule exploration.

pub mod aba;
pub mod acast;
pub mod field;
pub mod icc;
pub mod ivss;
pub mod msg;
pub mod poly;
pub mod process;
pub mod simnet;
pub mod vote;

use serde::{Deserialize, Serialize};

/// Process identifier, `1..=n`. Doubles as the field evaluation point; `0`
/// is reserved for the secret point.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn point(self) -> field::Fe {
        field::Fe(self.0 as u64)
    }
}

impl std::fmt::Display for ProcessId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Protocol round number, starting at 1. Round 0 only indexes the empty
/// pre-protocol invocation history.
pub type Round = u32;

/// Unordered process pair, stored with the smaller id first.
pub type Pair = (ProcessId, ProcessId);

/// Normalizes an unordered pair.
pub fn pair(a: ProcessId, b: ProcessId) -> Pair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Iterates over all process ids `1..=n`.
pub fn all_ids(n: usize) -> impl Iterator<Item = ProcessId> {
    (1..=n as u32).map(ProcessId)
}
