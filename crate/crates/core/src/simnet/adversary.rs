//! Programmable adversary: a static corrupt set, a delivery-order policy,
//! and per-corrupt-process traffic rewriting.
//!
//! Scripts are declarative — one of the built-in behaviors below plus
//! parameters — and see only message metadata for scheduling decisions.
//! Payload access exists solely inside [`Adversary::transform`], which runs
//! on traffic originating at corrupt processes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::msg::{AcastId, Envelope, IvssInstanceId, Payload, Phase, Topic, WireMessage};
use crate::ProcessId;

/// Declarative adversary description, as it appears in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryScript {
    /// Fair random delivery, no corruption.
    None,
    /// Network-level: messages touching `target` wait `ticks` scheduler
    /// steps before becoming deliverable.
    Delay { target: ProcessId, ticks: u64 },
    /// Network-level: newest-first delivery.
    Reorder,
    /// `target` is corrupt and sends nothing at all.
    Silent { target: ProcessId },
    /// `target` is corrupt and perturbs every point it sends in the sharing
    /// phase.
    WrongPoint { target: ProcessId },
    /// The classic divergence attack: the corrupt dealer publishes a
    /// candidate set excluding `victim`, swaps its reconstruction row for
    /// the row of a second polynomial agreeing with row 1 only, and the
    /// network feeds `victim` the divergent interpolation set first.
    EquivocatingDealer { dealer: ProcessId, victim: ProcessId },
}

impl AdversaryScript {
    pub const NAMED: [&'static str; 6] =
        ["none", "delay", "reorder", "silent", "wrong_point", "equivocating_dealer"];

    pub fn name(&self) -> &'static str {
        match self {
            AdversaryScript::None => "none",
            AdversaryScript::Delay { .. } => "delay",
            AdversaryScript::Reorder => "reorder",
            AdversaryScript::Silent { .. } => "silent",
            AdversaryScript::WrongPoint { .. } => "wrong_point",
            AdversaryScript::EquivocatingDealer { .. } => "equivocating_dealer",
        }
    }

    /// Builds the standard instance of a named script for an `n`-process
    /// run: the corrupt process is the highest id, the victim the one below.
    pub fn by_name(name: &str, n: usize, fairness: u64) -> Option<AdversaryScript> {
        let last = ProcessId(n as u32);
        let second = ProcessId(n as u32 - 1);
        Some(match name {
            "none" => AdversaryScript::None,
            "delay" => AdversaryScript::Delay { target: last, ticks: fairness.saturating_sub(1) },
            "reorder" => AdversaryScript::Reorder,
            "silent" => AdversaryScript::Silent { target: last },
            "wrong_point" => AdversaryScript::WrongPoint { target: last },
            "equivocating_dealer" => {
                AdversaryScript::EquivocatingDealer { dealer: last, victim: second }
            }
            _ => return None,
        })
    }
}

/// Message metadata visible to scheduling decisions: routing and protocol
/// position, never payload bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageMeta {
    pub from: ProcessId,
    pub to: ProcessId,
    pub kind: MetaKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaKind {
    Acast { id: AcastId, phase: Phase },
    Row { id: IvssInstanceId },
    Point { id: IvssInstanceId },
}

impl MessageMeta {
    pub fn of(env: &Envelope) -> Self {
        let kind = match &env.msg {
            WireMessage::Acast { id, phase, .. } => MetaKind::Acast { id: *id, phase: *phase },
            WireMessage::Row { id, .. } => MetaKind::Row { id: *id },
            WireMessage::Point { id, .. } => MetaKind::Point { id: *id },
        };
        MessageMeta { from: env.from, to: env.to, kind }
    }
}

/// Where a freshly enqueued message goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Free,
    /// Deliverable once the scheduler step counter reaches the value.
    Until(u64),
    /// Deliverable once the release flag fires.
    Flag(u32),
}

/// Runtime interpretation of a script for one run.
#[derive(Debug, Clone)]
pub struct Adversary {
    script: AdversaryScript,
    n: usize,
    corrupt: BTreeSet<ProcessId>,
    /// Equivocating-dealer derived data.
    eq: Option<EqDealer>,
}

#[derive(Debug, Clone)]
struct EqDealer {
    dealer: ProcessId,
    victim: ProcessId,
    /// Forced candidate set for the attacked instance.
    m_set: Vec<ProcessId>,
    /// The member whose row the second polynomial shares (always id 1).
    shared: ProcessId,
    instance: IvssInstanceId,
    /// Processes whose `ready to complete` send has been observed.
    ready_seen: BTreeSet<ProcessId>,
    /// Processes whose round-1 attach send has been observed.
    attach_seen: BTreeSet<ProcessId>,
}

/// Flag namespaces for the equivocating-dealer release conditions.
const FLAG_READY: u32 = 0;
const FLAG_ATTACH: u32 = 1 << 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("script names process {0}, but n = {1}")]
    BadProcess(ProcessId, usize),
    #[error("script needs t >= 1 to corrupt a process")]
    NoCorruptionBudget,
    #[error("equivocating dealer requires dealer and victim distinct from process 1 and each other")]
    BadAttackCast,
    #[error("delay of {0} ticks exceeds the fairness bound {1}")]
    DelayBeyondFairness(u64, u64),
}

impl Adversary {
    pub fn new(
        script: AdversaryScript,
        n: usize,
        t: usize,
        fairness: u64,
    ) -> Result<Self, ScriptError> {
        let check = |p: ProcessId| {
            if p.0 == 0 || p.0 > n as u32 {
                Err(ScriptError::BadProcess(p, n))
            } else {
                Ok(())
            }
        };
        let mut corrupt = BTreeSet::new();
        let mut eq = None;
        match script {
            AdversaryScript::None | AdversaryScript::Reorder => {}
            AdversaryScript::Delay { target, ticks } => {
                check(target)?;
                if ticks >= fairness {
                    return Err(ScriptError::DelayBeyondFairness(ticks, fairness));
                }
            }
            AdversaryScript::Silent { target } | AdversaryScript::WrongPoint { target } => {
                check(target)?;
                if t == 0 {
                    return Err(ScriptError::NoCorruptionBudget);
                }
                corrupt.insert(target);
            }
            AdversaryScript::EquivocatingDealer { dealer, victim } => {
                check(dealer)?;
                check(victim)?;
                if t == 0 {
                    return Err(ScriptError::NoCorruptionBudget);
                }
                if dealer == victim || dealer.0 == 1 || victim.0 == 1 {
                    return Err(ScriptError::BadAttackCast);
                }
                corrupt.insert(dealer);
                // dealer plus the lexicographically first n-t-1 other ids,
                // excluding the victim; id 1 is always a member.
                let mut m_set = vec![dealer];
                for i in 1..=n as u32 {
                    let p = ProcessId(i);
                    if p != dealer && p != victim && m_set.len() < n - t {
                        m_set.push(p);
                    }
                }
                m_set.sort();
                eq = Some(EqDealer {
                    dealer,
                    victim,
                    m_set,
                    shared: ProcessId(1),
                    instance: IvssInstanceId { dealer, round: 1, counter: 0 },
                    ready_seen: BTreeSet::new(),
                    attach_seen: BTreeSet::new(),
                });
            }
        }
        Ok(Self { script, n, corrupt, eq })
    }

    pub fn corrupt(&self) -> &BTreeSet<ProcessId> {
        &self.corrupt
    }

    pub fn newest_first(&self) -> bool {
        matches!(self.script, AdversaryScript::Reorder)
    }

    /// Classifies a freshly sent message. Holds express delivery-order
    /// preferences only; the scheduler's fairness bound overrides them.
    pub fn placement(&self, meta: &MessageMeta, now: u64) -> Placement {
        match (&self.script, &self.eq) {
            (AdversaryScript::Delay { target, ticks }, _) => {
                if meta.from == *target || meta.to == *target {
                    Placement::Until(now + ticks)
                } else {
                    Placement::Free
                }
            }
            (AdversaryScript::EquivocatingDealer { .. }, Some(eq)) => {
                let MetaKind::Acast { id, .. } = meta.kind else { return Placement::Free };
                match id.topic {
                    Topic::ReconRow { id: iid } if iid == eq.instance => {
                        let row_owner = id.sender;
                        let member = eq.m_set.contains(&row_owner);
                        let held = if meta.to == eq.victim {
                            // starve the victim of every member row except
                            // the dealer's and the shared one
                            member && row_owner != eq.dealer && row_owner != eq.shared
                        } else {
                            // everyone else sees the dealer's row last
                            row_owner == eq.dealer
                        };
                        if held && !eq.ready_seen.contains(&meta.to) {
                            Placement::Flag(FLAG_READY | meta.to.0)
                        } else {
                            Placement::Free
                        }
                    }
                    // Slow down the other dealers' sharing completions so
                    // the attacked dealer lands in every attach set: their
                    // candidate sets wait until the receiver has attached.
                    Topic::CandidateSet { id: iid }
                        if iid.round == 1
                            && iid.dealer != eq.dealer
                            && iid.dealer != eq.shared
                            && !eq.attach_seen.contains(&meta.to) =>
                    {
                        Placement::Flag(FLAG_ATTACH | meta.to.0)
                    }
                    _ => Placement::Free,
                }
            }
            _ => Placement::Free,
        }
    }

    /// Observes a send; returns release flags that just fired.
    pub fn observe_send(&mut self, meta: &MessageMeta) -> Option<u32> {
        let eq = self.eq.as_mut()?;
        if let MetaKind::Acast { id, phase: Phase::Msg } = meta.kind {
            if id.topic == (Topic::ReadyToComplete { id: eq.instance })
                && id.sender == meta.from
                && eq.ready_seen.insert(meta.from)
            {
                return Some(FLAG_READY | meta.from.0);
            }
            if id.topic == (Topic::Attach { round: 1 })
                && id.sender == meta.from
                && eq.attach_seen.insert(meta.from)
            {
                return Some(FLAG_ATTACH | meta.from.0);
            }
        }
        None
    }

    /// Rewrites traffic originating at a corrupt process. The returned
    /// envelopes keep the corrupt sender: private channels cannot be forged.
    pub fn transform(&mut self, env: Envelope, field: Field) -> Vec<Envelope> {
        match (&self.script, &self.eq) {
            (AdversaryScript::Silent { .. }, _) => vec![],
            (AdversaryScript::WrongPoint { .. }, _) => {
                let env = match env.msg {
                    WireMessage::Point { id, value } => Envelope {
                        msg: WireMessage::Point {
                            id,
                            value: field.add(value, crate::field::Fe(1)),
                        },
                        ..env
                    },
                    _ => env,
                };
                vec![env]
            }
            (AdversaryScript::EquivocatingDealer { .. }, Some(eq)) => {
                let WireMessage::Acast { id, phase, value } = &env.msg else { return vec![env] };
                if *phase != Phase::Msg || id.sender != eq.dealer {
                    return vec![env];
                }
                if id.topic == (Topic::CandidateSet { id: eq.instance }) {
                    let value = Payload::CandidateSet(eq.m_set.clone()).encode();
                    return vec![Envelope {
                        msg: WireMessage::Acast { id: *id, phase: *phase, value },
                        ..env
                    }];
                }
                if id.topic == (Topic::ReconRow { id: eq.instance }) {
                    // Publish the row of g = f + (1-x)(1-y) instead of f's:
                    // at x = dealer this adds (1-d) + (d-1) y.
                    let Some(Payload::ReconRow(coeffs)) = Payload::decode(value) else {
                        return vec![env];
                    };
                    let d = eq.dealer.point();
                    let one = field.one();
                    let c0 = field.sub(one, d);
                    let c1 = field.sub(d, one);
                    let mut coeffs = coeffs;
                    coeffs.resize(2.max(coeffs.len()), field.zero());
                    coeffs[0] = field.add(coeffs[0], c0);
                    coeffs[1] = field.add(coeffs[1], c1);
                    let value = Payload::ReconRow(coeffs).encode();
                    return vec![Envelope {
                        msg: WireMessage::Acast { id: *id, phase: *phase, value },
                        ..env
                    }];
                }
                vec![env]
            }
            _ => vec![env],
        }
    }

    /// Payload visibility rule: only traffic touching a corrupt process is
    /// readable. Correct-to-correct channels stay private.
    pub fn payload_view<'e>(&self, env: &'e Envelope) -> Option<&'e WireMessage> {
        if self.corrupt.contains(&env.from) || self.corrupt.contains(&env.to) {
            Some(&env.msg)
        } else {
            None
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}
