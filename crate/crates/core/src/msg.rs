//! Instance identifiers, broadcast topics, wire messages, and the byte
//! codec for broadcast values.
//!
//! The broadcast engine treats values as opaque bytes; every protocol layer
//! above encodes its payload through [`Payload`]. The codec is a fixed
//! little-endian layout so that identical logical values always serialize to
//! identical bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::field::Fe;
use crate::{Pair, ProcessId, Round};

/// Identifier of one secret-sharing invocation: dealer, protocol round, and
/// a per-dealer counter. Globally unique per invocation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct IvssInstanceId {
    pub dealer: ProcessId,
    pub round: Round,
    pub counter: u32,
}

impl std::fmt::Display for IvssInstanceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r={}/dealer={}/cnt={}", self.round, self.dealer, self.counter)
    }
}

/// Per-instance topic of a broadcast. Together with the sender id this
/// uniquely identifies one A-Cast instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Topic {
    /// `equal:(k,i)` for one sharing; the sender must be `k`.
    Equal { id: IvssInstanceId, pair: (ProcessId, ProcessId) },
    /// The dealer's candidate set for one sharing.
    CandidateSet { id: IvssInstanceId },
    /// A member's row polynomial, opening the reconstruction.
    ReconRow { id: IvssInstanceId },
    /// `ready to complete` for one reconstruction.
    ReadyToComplete { id: IvssInstanceId },
    /// The sender's invocation history of `round`.
    CoreInvocations { round: Round },
    /// Batched pair clearances by the sender for `owner`'s history before
    /// `round`; `seq` distinguishes successive batches.
    Checked { owner: ProcessId, round: Round, seq: u32 },
    /// Coin bookkeeping for `round`.
    Attach { round: Round },
    Accepts { round: Round },
    ReconstructEnabled { round: Round },
    HandSets { round: Round },
    /// Graded vote traffic for `round`.
    VoteInput { round: Round },
    VoteVote { round: Round },
    VoteRevote { round: Round },
    /// Decision announcement from the round the sender saw grade 2.
    CompleteWith { round: Round },
}

impl std::fmt::Display for Topic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topic::Equal { id, pair } => {
                write!(f, "ivss/{id}/equal/({},{})", pair.0, pair.1)
            }
            Topic::CandidateSet { id } => write!(f, "ivss/{id}/candidate-set"),
            Topic::ReconRow { id } => write!(f, "ivss/{id}/recon-row"),
            Topic::ReadyToComplete { id } => write!(f, "ivss/{id}/ready"),
            Topic::CoreInvocations { round } => write!(f, "cert/r={round}/core-invocations"),
            Topic::Checked { owner, round, seq } => {
                write!(f, "cert/r={round}/checked/owner={owner}/batch={seq}")
            }
            Topic::Attach { round } => write!(f, "icc/r={round}/attach"),
            Topic::Accepts { round } => write!(f, "icc/r={round}/accepts"),
            Topic::ReconstructEnabled { round } => write!(f, "icc/r={round}/recon-enabled"),
            Topic::HandSets { round } => write!(f, "icc/r={round}/hs"),
            Topic::VoteInput { round } => write!(f, "vote/r={round}/input"),
            Topic::VoteVote { round } => write!(f, "vote/r={round}/vote"),
            Topic::VoteRevote { round } => write!(f, "vote/r={round}/revote"),
            Topic::CompleteWith { round } => write!(f, "aba/r={round}/complete-with"),
        }
    }
}

/// One A-Cast instance: the initiating sender plus the topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AcastId {
    pub sender: ProcessId,
    pub topic: Topic,
}

/// Phase of an A-Cast protocol message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Msg,
    Echo,
    Ready,
}

/// Broadcast value bytes, shared between the fan-out copies of one send.
pub type Value = Arc<[u8]>;

/// Everything that can travel on a channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WireMessage {
    Acast { id: AcastId, phase: Phase, value: Value },
    /// Private row from the dealer (sharing step 1).
    Row { id: IvssInstanceId, coeffs: Vec<Fe> },
    /// Private point exchange (sharing step 2).
    Point { id: IvssInstanceId, value: Fe },
}

/// A routed message in flight.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub from: ProcessId,
    pub to: ProcessId,
    pub msg: WireMessage,
}

/// Decoded broadcast value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Marker for topics whose whole content is the topic itself
    /// (`equal`, `ready to complete`, `Reconstruct Enabled`).
    Unit,
    /// Candidate set members.
    CandidateSet(Vec<ProcessId>),
    /// Row polynomial coefficients, low-to-high.
    ReconRow(Vec<Fe>),
    /// Invocation history entries.
    CoreSet(Vec<IvssInstanceId>),
    /// Cleared pairs.
    Checked(Vec<Pair>),
    /// Attached dealer set.
    Attach(Vec<ProcessId>),
    /// Accepted attach set.
    Accepts(Vec<ProcessId>),
    /// Snapshot pair `(H, S)`.
    HandSets(Vec<ProcessId>, Vec<ProcessId>),
    /// Vote input bit.
    VoteInput(bool),
    /// Vote with the supporting input set.
    Vote { entries: Vec<(ProcessId, bool)>, bit: bool },
    /// Revote with the supporting vote set.
    Revote { entries: Vec<(ProcessId, Vec<(ProcessId, bool)>, bool)>, bit: bool },
    /// Decision value.
    CompleteWith(bool),
}

const TAG_UNIT: u8 = 0;
const TAG_CANDIDATE_SET: u8 = 1;
const TAG_RECON_ROW: u8 = 2;
const TAG_CORE_SET: u8 = 3;
const TAG_CHECKED: u8 = 4;
const TAG_ATTACH: u8 = 5;
const TAG_ACCEPTS: u8 = 6;
const TAG_HAND_SETS: u8 = 7;
const TAG_VOTE_INPUT: u8 = 8;
const TAG_VOTE: u8 = 9;
const TAG_REVOTE: u8 = 10;
const TAG_COMPLETE_WITH: u8 = 11;

struct Writer(Vec<u8>);

impl Writer {
    fn new(tag: u8) -> Self {
        let mut v = Vec::with_capacity(16);
        v.push(tag);
        Writer(v)
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.0.push(v as u8);
    }
    fn pid(&mut self, p: ProcessId) {
        self.u32(p.0);
    }
    fn pids(&mut self, ps: &[ProcessId]) {
        self.u32(ps.len() as u32);
        for &p in ps {
            self.pid(p);
        }
    }
    fn iid(&mut self, id: IvssInstanceId) {
        self.pid(id.dealer);
        self.u32(id.round);
        self.u32(id.counter);
    }
    fn done(self) -> Value {
        self.0.into()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Option<u32> {
        let end = self.pos.checked_add(4)?;
        let v = u32::from_le_bytes(self.buf.get(self.pos..end)?.try_into().ok()?);
        self.pos = end;
        Some(v)
    }
    fn u64(&mut self) -> Option<u64> {
        let end = self.pos.checked_add(8)?;
        let v = u64::from_le_bytes(self.buf.get(self.pos..end)?.try_into().ok()?);
        self.pos = end;
        Some(v)
    }
    fn bool(&mut self) -> Option<bool> {
        let b = *self.buf.get(self.pos)?;
        self.pos += 1;
        match b {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }
    }
    fn pid(&mut self) -> Option<ProcessId> {
        self.u32().map(ProcessId)
    }
    fn len(&mut self) -> Option<usize> {
        let n = self.u32()? as usize;
        // Reject absurd lengths before allocating.
        if n > 1 << 20 {
            None
        } else {
            Some(n)
        }
    }
    fn pids(&mut self) -> Option<Vec<ProcessId>> {
        let n = self.len()?;
        (0..n).map(|_| self.pid()).collect()
    }
    fn iid(&mut self) -> Option<IvssInstanceId> {
        Some(IvssInstanceId { dealer: self.pid()?, round: self.u32()?, counter: self.u32()? })
    }
    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

impl Payload {
    pub fn encode(&self) -> Value {
        match self {
            Payload::Unit => Writer::new(TAG_UNIT).done(),
            Payload::CandidateSet(ps) => {
                let mut w = Writer::new(TAG_CANDIDATE_SET);
                w.pids(ps);
                w.done()
            }
            Payload::ReconRow(coeffs) => {
                let mut w = Writer::new(TAG_RECON_ROW);
                w.u32(coeffs.len() as u32);
                for c in coeffs {
                    w.u64(c.0);
                }
                w.done()
            }
            Payload::CoreSet(ids) => {
                let mut w = Writer::new(TAG_CORE_SET);
                w.u32(ids.len() as u32);
                for &id in ids {
                    w.iid(id);
                }
                w.done()
            }
            Payload::Checked(pairs) => {
                let mut w = Writer::new(TAG_CHECKED);
                w.u32(pairs.len() as u32);
                for &(a, b) in pairs {
                    w.pid(a);
                    w.pid(b);
                }
                w.done()
            }
            Payload::Attach(ps) => {
                let mut w = Writer::new(TAG_ATTACH);
                w.pids(ps);
                w.done()
            }
            Payload::Accepts(ps) => {
                let mut w = Writer::new(TAG_ACCEPTS);
                w.pids(ps);
                w.done()
            }
            Payload::HandSets(h, s) => {
                let mut w = Writer::new(TAG_HAND_SETS);
                w.pids(h);
                w.pids(s);
                w.done()
            }
            Payload::VoteInput(b) => {
                let mut w = Writer::new(TAG_VOTE_INPUT);
                w.bool(*b);
                w.done()
            }
            Payload::Vote { entries, bit } => {
                let mut w = Writer::new(TAG_VOTE);
                w.u32(entries.len() as u32);
                for &(p, x) in entries {
                    w.pid(p);
                    w.bool(x);
                }
                w.bool(*bit);
                w.done()
            }
            Payload::Revote { entries, bit } => {
                let mut w = Writer::new(TAG_REVOTE);
                w.u32(entries.len() as u32);
                for (p, a, x) in entries {
                    w.pid(*p);
                    w.u32(a.len() as u32);
                    for &(q, y) in a {
                        w.pid(q);
                        w.bool(y);
                    }
                    w.bool(*x);
                }
                w.bool(*bit);
                w.done()
            }
            Payload::CompleteWith(b) => {
                let mut w = Writer::new(TAG_COMPLETE_WITH);
                w.bool(*b);
                w.done()
            }
        }
    }

    /// Decodes value bytes. Malformed input yields `None` and is dropped by
    /// the protocol layer.
    pub fn decode(bytes: &[u8]) -> Option<Payload> {
        let (&tag, rest) = bytes.split_first()?;
        let mut r = Reader { buf: rest, pos: 0 };
        let payload = match tag {
            TAG_UNIT => Payload::Unit,
            TAG_CANDIDATE_SET => Payload::CandidateSet(r.pids()?),
            TAG_RECON_ROW => {
                let n = r.len()?;
                let coeffs = (0..n).map(|_| r.u64().map(Fe)).collect::<Option<Vec<_>>>()?;
                Payload::ReconRow(coeffs)
            }
            TAG_CORE_SET => {
                let n = r.len()?;
                let ids = (0..n).map(|_| r.iid()).collect::<Option<Vec<_>>>()?;
                Payload::CoreSet(ids)
            }
            TAG_CHECKED => {
                let n = r.len()?;
                let pairs = (0..n)
                    .map(|_| Some((r.pid()?, r.pid()?)))
                    .collect::<Option<Vec<_>>>()?;
                Payload::Checked(pairs)
            }
            TAG_ATTACH => Payload::Attach(r.pids()?),
            TAG_ACCEPTS => Payload::Accepts(r.pids()?),
            TAG_HAND_SETS => Payload::HandSets(r.pids()?, r.pids()?),
            TAG_VOTE_INPUT => Payload::VoteInput(r.bool()?),
            TAG_VOTE => {
                let n = r.len()?;
                let entries = (0..n)
                    .map(|_| Some((r.pid()?, r.bool()?)))
                    .collect::<Option<Vec<_>>>()?;
                Payload::Vote { entries, bit: r.bool()? }
            }
            TAG_REVOTE => {
                let n = r.len()?;
                let entries = (0..n)
                    .map(|_| {
                        let p = r.pid()?;
                        let m = r.len()?;
                        let a = (0..m)
                            .map(|_| Some((r.pid()?, r.bool()?)))
                            .collect::<Option<Vec<_>>>()?;
                        Some((p, a, r.bool()?))
                    })
                    .collect::<Option<Vec<_>>>()?;
                Payload::Revote { entries, bit: r.bool()? }
            }
            TAG_COMPLETE_WITH => Payload::CompleteWith(r.bool()?),
            _ => return None,
        };
        if r.finished() {
            Some(payload)
        } else {
            None
        }
    }
}
