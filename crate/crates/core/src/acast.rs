//! Bracha reliable broadcast as a reusable state machine.
//!
//! One instance carries one value from one sender; the engine below keeps
//! every instance this process has seen and answers protocol messages with
//! explicit emission lists. Relays never stop: any process echoes and
//! amplifies for any instance it hears about, which is what the totality
//! property rests on.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::msg::{AcastId, Envelope, Phase, Topic, Value, WireMessage};
use crate::ProcessId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AcastError {
    #[error("broadcast instance {0:?} started twice")]
    DoubleStart(Box<Topic>),
}

/// Local view of one broadcast instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AcastInstance {
    sent_echo: bool,
    sent_ready: bool,
    echo_seen: BTreeSet<ProcessId>,
    echo_counts: BTreeMap<Value, u32>,
    ready_seen: BTreeSet<ProcessId>,
    ready_counts: BTreeMap<Value, u32>,
    delivered: Option<Value>,
}

impl AcastInstance {
    pub fn delivered(&self) -> Option<&Value> {
        self.delivered.as_ref()
    }
}

/// All broadcast state of one process.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AcastBook {
    me: ProcessId,
    n: u32,
    t: u32,
    started: BTreeSet<Topic>,
    instances: BTreeMap<AcastId, AcastInstance>,
}

impl AcastBook {
    pub fn new(me: ProcessId, n: usize, t: usize) -> Self {
        Self { me, n: n as u32, t: t as u32, started: BTreeSet::new(), instances: BTreeMap::new() }
    }

    /// Initiates an instance with this process as the sender: `msg` goes to
    /// every process, including the sender itself.
    pub fn start(
        &mut self,
        topic: Topic,
        value: Value,
        out: &mut Vec<Envelope>,
    ) -> Result<(), AcastError> {
        if !self.started.insert(topic) {
            return Err(AcastError::DoubleStart(Box::new(topic)));
        }
        let id = AcastId { sender: self.me, topic };
        self.fan_out(id, Phase::Msg, value, out);
        Ok(())
    }

    /// Handles one protocol message; returns the delivered value when the
    /// instance completes locally.
    pub fn handle(
        &mut self,
        id: AcastId,
        from: ProcessId,
        phase: Phase,
        value: Value,
        out: &mut Vec<Envelope>,
    ) -> Option<Value> {
        let n = self.n;
        let t = self.t;
        let inst = self.instances.entry(id).or_default();
        let mut send_echo = None;
        let mut send_ready = None;
        match phase {
            Phase::Msg => {
                // Only the designated sender may open the instance.
                if from == id.sender && !inst.sent_echo {
                    inst.sent_echo = true;
                    send_echo = Some(value);
                }
            }
            Phase::Echo => {
                if inst.echo_seen.insert(from) {
                    let count = inst.echo_counts.entry(value.clone()).or_insert(0);
                    *count += 1;
                    if *count >= n - t && !inst.sent_ready {
                        inst.sent_ready = true;
                        send_ready = Some(value);
                    }
                }
            }
            Phase::Ready => {
                if inst.ready_seen.insert(from) {
                    let count = inst.ready_counts.entry(value.clone()).or_insert(0);
                    *count += 1;
                    if *count >= t + 1 && !inst.sent_ready {
                        inst.sent_ready = true;
                        send_ready = Some(value.clone());
                    }
                    if *count >= 2 * t + 1 && inst.delivered.is_none() {
                        inst.delivered = Some(value.clone());
                        if let Some(v) = send_ready.take() {
                            self.fan_out(id, Phase::Ready, v, out);
                        }
                        return Some(value);
                    }
                }
            }
        }
        if let Some(v) = send_echo {
            self.fan_out(id, Phase::Echo, v, out);
        }
        if let Some(v) = send_ready {
            self.fan_out(id, Phase::Ready, v, out);
        }
        None
    }

    pub fn instance(&self, id: &AcastId) -> Option<&AcastInstance> {
        self.instances.get(id)
    }

    fn fan_out(&self, id: AcastId, phase: Phase, value: Value, out: &mut Vec<Envelope>) {
        for to in 1..=self.n {
            out.push(Envelope {
                from: self.me,
                to: ProcessId(to),
                msg: WireMessage::Acast { id, phase, value: value.clone() },
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topic() -> Topic {
        Topic::VoteInput { round: 1 }
    }

    fn val(s: &str) -> Value {
        s.as_bytes().into()
    }

    fn id(sender: u32) -> AcastId {
        AcastId { sender: ProcessId(sender), topic: topic() }
    }

    #[test]
    fn start_emits_one_msg_per_process() {
        let mut book = AcastBook::new(ProcessId(1), 4, 1);
        let mut out = Vec::new();
        book.start(topic(), val("v"), &mut out).unwrap();
        assert_eq!(out.len(), 4);
        let targets: Vec<u32> = out.iter().map(|e| e.to.0).collect();
        assert_eq!(targets, vec![1, 2, 3, 4]);
        for e in &out {
            assert!(matches!(&e.msg, WireMessage::Acast { phase: Phase::Msg, .. }));
        }
    }

    #[test]
    fn double_start_is_a_protocol_violation() {
        let mut book = AcastBook::new(ProcessId(1), 4, 1);
        let mut out = Vec::new();
        book.start(topic(), val("v"), &mut out).unwrap();
        assert!(matches!(book.start(topic(), val("w"), &mut out), Err(AcastError::DoubleStart(_))));
    }

    #[test]
    fn thresholds_at_n4_t1() {
        // n=4, t=1: echo after msg, ready after 3 matching echoes,
        // amplification at 2 readies, delivery at 3 readies.
        let mut book = AcastBook::new(ProcessId(2), 4, 1);
        let mut out = Vec::new();

        assert!(book.handle(id(1), ProcessId(1), Phase::Msg, val("v"), &mut out).is_none());
        assert_eq!(out.len(), 4, "echo fan-out");
        out.clear();

        for (i, peer) in [1u32, 2].iter().enumerate() {
            assert!(book
                .handle(id(1), ProcessId(*peer), Phase::Echo, val("v"), &mut out)
                .is_none());
            assert!(out.is_empty(), "no ready after {} echoes", i + 1);
        }
        assert!(book.handle(id(1), ProcessId(3), Phase::Echo, val("v"), &mut out).is_none());
        assert_eq!(out.len(), 4, "ready fan-out after n-t echoes");
        out.clear();

        assert!(book.handle(id(1), ProcessId(1), Phase::Ready, val("v"), &mut out).is_none());
        assert!(book.handle(id(1), ProcessId(3), Phase::Ready, val("v"), &mut out).is_none());
        let delivered = book.handle(id(1), ProcessId(4), Phase::Ready, val("v"), &mut out);
        assert_eq!(delivered, Some(val("v")));
    }

    #[test]
    fn ready_amplification_at_t_plus_1() {
        let mut book = AcastBook::new(ProcessId(2), 4, 1);
        let mut out = Vec::new();
        assert!(book.handle(id(1), ProcessId(3), Phase::Ready, val("v"), &mut out).is_none());
        assert!(out.is_empty());
        assert!(book.handle(id(1), ProcessId(4), Phase::Ready, val("v"), &mut out).is_none());
        assert_eq!(out.len(), 4, "t+1 readies trigger our own ready");
        assert!(out
            .iter()
            .all(|e| matches!(&e.msg, WireMessage::Acast { phase: Phase::Ready, .. })));
    }

    #[test]
    fn replayed_messages_do_not_move_counters() {
        let mut book = AcastBook::new(ProcessId(2), 4, 1);
        let mut out = Vec::new();
        for _ in 0..5 {
            book.handle(id(1), ProcessId(3), Phase::Echo, val("v"), &mut out);
            // a different value from the same peer is also ignored
            book.handle(id(1), ProcessId(3), Phase::Echo, val("w"), &mut out);
        }
        let inst = book.instance(&id(1)).unwrap();
        assert_eq!(inst.echo_counts.get(&val("v")), Some(&1));
        assert_eq!(inst.echo_counts.get(&val("w")), None);
        assert!(out.is_empty());
    }

    #[test]
    fn msg_from_non_sender_is_ignored() {
        let mut book = AcastBook::new(ProcessId(2), 4, 1);
        let mut out = Vec::new();
        assert!(book.handle(id(1), ProcessId(3), Phase::Msg, val("v"), &mut out).is_none());
        assert!(out.is_empty());
    }

    #[test]
    fn delivery_is_immutable() {
        let mut book = AcastBook::new(ProcessId(2), 4, 1);
        let mut out = Vec::new();
        for peer in [1u32, 3, 4] {
            book.handle(id(1), ProcessId(peer), Phase::Ready, val("v"), &mut out);
        }
        assert_eq!(book.instance(&id(1)).unwrap().delivered(), Some(&val("v")));
        // a late flood of a different value cannot change the output
        let fresh = book.handle(id(1), ProcessId(2), Phase::Ready, val("w"), &mut out);
        assert!(fresh.is_none());
        assert_eq!(book.instance(&id(1)).unwrap().delivered(), Some(&val("v")));
    }
}
