//! One simulated process: the composition of the broadcast engine, the
//! sharing/certification book, per-round coin and vote instances, and the
//! agreement driver, advanced one delivered message at a time.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aba::{AbaAction, AbaDriver};
use crate::acast::AcastBook;
use crate::field::{Fe, Field};
use crate::icc::IccRound;
use crate::ivss::IvssBook;
use crate::msg::{AcastId, Envelope, IvssInstanceId, Payload, Topic, Value, WireMessage};
use crate::vote::VoteInstance;
use crate::{Pair, ProcessId, Round};

/// Observations a process reports to the harness; the simulator drains them
/// after every delivery. These feed metrics and test oracles only — no
/// protocol logic reads them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalEvent {
    RoundEntered { round: Round },
    /// A candidate set became known (delivery of the dealer's broadcast).
    CandidateSeen { id: IvssInstanceId, members: Vec<ProcessId> },
    /// The full equal/checked conditions held for the set (dealer emission
    /// or step-5 verification).
    CandidateAccepted { id: IvssInstanceId, members: Vec<ProcessId> },
    FpAdded { pair: Pair },
    ReadyRecorded { id: IvssInstanceId, bucket: Round },
    IvssOutput { id: IvssInstanceId, value: Fe },
    ReconstructEnabled {
        round: Round,
        h: Vec<ProcessId>,
        s: Vec<ProcessId>,
        views: Vec<(ProcessId, Vec<ProcessId>)>,
    },
    /// An associated value was computed for a member.
    AssociatedValue { round: Round, member: ProcessId, value: u64 },
    CoinOutput { round: Round, value: bool, via_h: Vec<ProcessId> },
    VoteOutput { round: Round, value: Option<bool>, grade: u8 },
    EstimateSet { round: Round, next: bool },
    CompleteWithSent { round: Round, value: bool },
    Decided { value: bool },
}

/// What protocol the process runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessMode {
    /// Full agreement from a binary input.
    Aba { input: bool },
    /// A single sharing plus reconstruction, dealt by `dealer` in round 1.
    IvssOnly { dealer: ProcessId },
}

/// Derives a per-stream generator from the root seed; stream 0 is the
/// scheduler, streams `1..=n` are the processes.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut s = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone)]
pub struct ProcessState {
    me: ProcessId,
    n: usize,
    t: usize,
    field: Field,
    mode: ProcessMode,
    rng: ChaCha8Rng,
    pub acast: AcastBook,
    pub ivss: IvssBook,
    icc: BTreeMap<Round, IccRound>,
    vote: BTreeMap<Round, VoteInstance>,
    aba: Option<AbaDriver>,
    events: Vec<LocalEvent>,
    outbox: Vec<Envelope>,
    started: bool,
    ivss_only_joined: bool,
}

impl ProcessState {
    pub fn new(me: ProcessId, n: usize, t: usize, field: Field, mode: ProcessMode, seed: u64) -> Self {
        Self {
            me,
            n,
            t,
            field,
            mode,
            rng: derive_rng(seed, me.0 as u64),
            acast: AcastBook::new(me, n, t),
            ivss: IvssBook::new(me, n, t, field),
            icc: BTreeMap::new(),
            vote: BTreeMap::new(),
            aba: match mode {
                ProcessMode::Aba { input } => Some(AbaDriver::new(me, t, input)),
                ProcessMode::IvssOnly { .. } => None,
            },
            events: Vec::new(),
            outbox: Vec::new(),
            started: false,
            ivss_only_joined: false,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.me
    }

    pub fn decided(&self) -> Option<bool> {
        self.aba.as_ref().and_then(|a| a.output())
    }

    pub fn max_round(&self) -> Round {
        self.aba.as_ref().map(|a| a.max_round()).unwrap_or(1)
    }

    pub fn take_events(&mut self) -> Vec<LocalEvent> {
        std::mem::take(&mut self.events)
    }

    /// Starts the protocol and returns the initial emissions.
    pub fn start(&mut self) -> Vec<Envelope> {
        assert!(!self.started, "process started twice");
        self.started = true;
        match self.mode {
            ProcessMode::Aba { .. } => {
                let action = self.aba.as_mut().expect("aba mode").start(&mut self.events);
                self.apply_action(action);
            }
            ProcessMode::IvssOnly { dealer } => {
                self.events.push(LocalEvent::RoundEntered { round: 1 });
                self.ivss.round_begin(1, &mut self.acast, &mut self.outbox);
                if dealer == self.me {
                    let secret = Fe(self.rng.gen_range(0..self.field.modulus()));
                    let id = IvssInstanceId { dealer, round: 1, counter: 0 };
                    self.ivss
                        .share_start(id, secret, &mut self.rng, &mut self.outbox)
                        .expect("fresh instance");
                }
            }
        }
        self.pump();
        std::mem::take(&mut self.outbox)
    }

    /// Handles one delivered message and returns the emissions it caused.
    pub fn handle(&mut self, from: ProcessId, msg: WireMessage) -> Vec<Envelope> {
        match msg {
            WireMessage::Acast { id, phase, value } => {
                if let Some(v) = self.acast.handle(id, from, phase, value, &mut self.outbox) {
                    self.on_delivery(id, v);
                }
            }
            WireMessage::Row { id, coeffs } => {
                self.ivss.handle_row(
                    id,
                    from,
                    coeffs,
                    &mut self.acast,
                    &mut self.outbox,
                    &mut self.events,
                );
            }
            WireMessage::Point { id, value } => {
                self.ivss.handle_point(id, from, value, &mut self.acast, &mut self.outbox);
            }
        }
        self.pump();
        std::mem::take(&mut self.outbox)
    }

    /// Routes one completed broadcast to its protocol layer. Values whose
    /// shape does not match the topic are Byzantine noise and are dropped.
    fn on_delivery(&mut self, id: AcastId, value: Value) {
        let Some(payload) = Payload::decode(&value) else { return };
        let sender = id.sender;
        if sender.0 == 0 || sender.0 > self.n as u32 {
            return;
        }
        match (id.topic, payload) {
            (Topic::Equal { id: iid, pair }, Payload::Unit) => {
                if pair.0 == sender {
                    self.ivss.handle_equal(
                        iid,
                        pair.0,
                        pair.1,
                        &mut self.acast,
                        &mut self.outbox,
                        &mut self.events,
                    );
                }
            }
            (Topic::CandidateSet { id: iid }, Payload::CandidateSet(members)) => {
                if sender == iid.dealer {
                    self.ivss.handle_candidate_set(
                        iid,
                        members,
                        &mut self.acast,
                        &mut self.outbox,
                        &mut self.events,
                    );
                }
            }
            (Topic::ReconRow { id: iid }, Payload::ReconRow(coeffs)) => {
                self.ivss.handle_recon_row(
                    iid,
                    sender,
                    coeffs,
                    &mut self.acast,
                    &mut self.outbox,
                    &mut self.events,
                );
            }
            (Topic::ReadyToComplete { id: iid }, Payload::Unit) => {
                self.ivss.handle_ready(iid, sender, &mut self.events);
            }
            (Topic::CoreInvocations { round }, Payload::CoreSet(ids)) => {
                self.ivss.handle_core_invocations(
                    sender,
                    round,
                    ids,
                    &mut self.acast,
                    &mut self.outbox,
                    &mut self.events,
                );
            }
            (Topic::Checked { owner, round, .. }, Payload::Checked(pairs)) => {
                self.ivss.handle_checked(
                    sender,
                    owner,
                    round,
                    pairs,
                    &mut self.acast,
                    &mut self.outbox,
                    &mut self.events,
                );
            }
            (Topic::Attach { round }, Payload::Attach(t_set)) => {
                let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, round);
                icc.on_attach(
                    sender,
                    t_set,
                    &mut self.ivss,
                    &mut self.acast,
                    &mut self.outbox,
                    &mut self.events,
                );
            }
            (Topic::Accepts { round }, Payload::Accepts(a_set)) => {
                let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, round);
                icc.on_accepts(sender, a_set, &mut self.acast, &mut self.outbox, &mut self.events);
            }
            (Topic::ReconstructEnabled { .. }, Payload::Unit) => {
                // Analysis marker; nothing to do on delivery.
            }
            (Topic::HandSets { round }, Payload::HandSets(h, s)) => {
                let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, round);
                icc.on_hand_sets(sender, h, s, &mut self.events);
            }
            (Topic::VoteInput { round }, Payload::VoteInput(x)) => {
                let vote = Self::vote_entry(&mut self.vote, self.me, self.n, self.t, round);
                vote.on_input(sender, x, &mut self.acast, &mut self.outbox, &mut self.events);
            }
            (Topic::VoteVote { round }, Payload::Vote { entries, bit }) => {
                let vote = Self::vote_entry(&mut self.vote, self.me, self.n, self.t, round);
                vote.on_vote(sender, entries, bit, &mut self.acast, &mut self.outbox, &mut self.events);
            }
            (Topic::VoteRevote { round }, Payload::Revote { entries, bit }) => {
                let vote = Self::vote_entry(&mut self.vote, self.me, self.n, self.t, round);
                vote.on_revote(sender, entries, bit, &mut self.acast, &mut self.outbox, &mut self.events);
            }
            (Topic::CompleteWith { .. }, Payload::CompleteWith(value)) => {
                if let Some(aba) = &mut self.aba {
                    aba.on_complete_with(sender, value, &mut self.events);
                }
            }
            _ => {}
        }
    }

    fn icc_entry<'a>(
        map: &'a mut BTreeMap<Round, IccRound>,
        me: ProcessId,
        n: usize,
        t: usize,
        round: Round,
    ) -> &'a mut IccRound {
        map.entry(round).or_insert_with(|| IccRound::new(me, n, t, round))
    }

    fn vote_entry<'a>(
        map: &'a mut BTreeMap<Round, VoteInstance>,
        me: ProcessId,
        n: usize,
        t: usize,
        round: Round,
    ) -> &'a mut VoteInstance {
        map.entry(round).or_insert_with(|| VoteInstance::new(me, n, t, round))
    }

    /// Runs the cross-layer cascade to a fixed point: sharing completions
    /// feed the coin tracker, reconstruction outputs feed associated values,
    /// and vote/coin outputs drive the agreement round machine.
    fn pump(&mut self) {
        loop {
            let mut progressed = false;
            let completed = std::mem::take(&mut self.ivss.newly_completed);
            for id in completed {
                progressed = true;
                match self.mode {
                    ProcessMode::Aba { .. } => {
                        let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, id.round);
                        icc.on_sharing_complete(
                            id,
                            &mut self.ivss,
                            &mut self.acast,
                            &mut self.outbox,
                            &mut self.events,
                        );
                    }
                    ProcessMode::IvssOnly { .. } => {}
                }
            }
            let outputs = std::mem::take(&mut self.ivss.newly_output);
            for (id, v) in outputs {
                progressed = true;
                if matches!(self.mode, ProcessMode::Aba { .. }) {
                    let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, id.round);
                    icc.on_ivss_output(id, v, &mut self.events);
                }
            }
            if let ProcessMode::IvssOnly { dealer } = self.mode {
                let id = IvssInstanceId { dealer, round: 1, counter: 0 };
                let complete = self
                    .ivss
                    .instance(&id)
                    .map(|i| i.sharing_complete())
                    .unwrap_or(false);
                if complete && !self.ivss_only_joined {
                    self.ivss_only_joined = true;
                    progressed = true;
                    self.ivss.join_reconstruction(
                        id,
                        &mut self.acast,
                        &mut self.outbox,
                        &mut self.events,
                    );
                }
            }
            if self.aba.is_some() {
                let round = self.aba.as_ref().expect("checked").round();
                if round >= 1 {
                    if let Some(result) =
                        self.vote.get_mut(&round).and_then(|v| v.take_fresh_output())
                    {
                        progressed = true;
                        let action =
                            self.aba.as_mut().expect("checked").on_vote_output(round, result);
                        self.apply_action(action);
                    }
                    let ready = self.aba.as_ref().expect("checked").awaiting_coin(round);
                    if ready {
                        if let Some(coin) =
                            self.icc.get_mut(&round).and_then(|i| i.take_fresh_output())
                        {
                            progressed = true;
                            let action = self.aba.as_mut().expect("checked").on_coin_output(
                                round,
                                coin,
                                &mut self.acast,
                                &mut self.outbox,
                                &mut self.events,
                            );
                            self.apply_action(action);
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }
    }

    fn apply_action(&mut self, action: AbaAction) {
        match action {
            AbaAction::None => {}
            AbaAction::StartVote { round, input } => {
                self.ivss.round_begin(round, &mut self.acast, &mut self.outbox);
                let vote = Self::vote_entry(&mut self.vote, self.me, self.n, self.t, round);
                vote.start(input, &mut self.acast, &mut self.outbox);
            }
            AbaAction::StartIcc { round } => {
                let icc = Self::icc_entry(&mut self.icc, self.me, self.n, self.t, round);
                icc.start(&mut self.rng, self.field, &mut self.ivss, &mut self.outbox);
            }
        }
    }

    /// Stable digest of the protocol-relevant state, for exploration dedup.
    /// The generator state is excluded: it only matters before the first
    /// deal, and exploration branches after dealing.
    pub fn digest<H: Hasher>(&self, h: &mut H) {
        self.acast.hash(h);
        self.ivss.hash(h);
        self.icc.hash(h);
        self.vote.hash(h);
        self.aba.hash(h);
        self.started.hash(h);
        self.ivss_only_joined.hash(h);
    }
}
