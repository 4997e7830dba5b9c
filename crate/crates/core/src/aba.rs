//! The agreement loop: alternate graded voting with the common coin until
//! `t+1` processes announce completion for one value.

use std::collections::{BTreeMap, BTreeSet};

use crate::acast::AcastBook;
use crate::msg::{Envelope, Payload, Topic};
use crate::process::LocalEvent;
use crate::{ProcessId, Round};

/// Top-level agreement state of one process.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbaDriver {
    me: ProcessId,
    t: usize,
    /// Current round; 0 before the protocol starts.
    round: Round,
    /// The estimate fed into the current round's vote.
    estimate: bool,
    /// Vote result `(y_r, m_r)` of the current round, once known.
    vote_done: Option<(Option<bool>, u8)>,
    icc_started: bool,
    round_concluded: bool,
    /// Round in which grade 2 fired; the process joins exactly one more
    /// round after it.
    completing_round: Option<Round>,
    complete_emitted: bool,
    /// First announced value per sender.
    complete_seen: BTreeSet<ProcessId>,
    tally: BTreeMap<bool, BTreeSet<ProcessId>>,
    output: Option<bool>,
    /// No further rounds are joined; broadcast relays continue outside.
    halted: bool,
    max_round: Round,
}

/// What the round driver asks the process shell to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbaAction {
    None,
    StartVote { round: Round, input: bool },
    StartIcc { round: Round },
}

impl AbaDriver {
    pub fn new(me: ProcessId, t: usize, input: bool) -> Self {
        Self {
            me,
            t,
            round: 0,
            estimate: input,
            vote_done: None,
            icc_started: false,
            round_concluded: false,
            completing_round: None,
            complete_emitted: false,
            complete_seen: BTreeSet::new(),
            tally: BTreeMap::new(),
            output: None,
            halted: false,
            max_round: 0,
        }
    }

    pub fn output(&self) -> Option<bool> {
        self.output
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn max_round(&self) -> Round {
        self.max_round
    }

    /// True when the driver can consume the coin for `round`: its own vote
    /// finished and the round is still open. The coin can complete earlier
    /// than the local vote on lagging processes, and must not be consumed
    /// before it can be acted upon.
    pub fn awaiting_coin(&self, round: Round) -> bool {
        round == self.round && self.vote_done.is_some() && !self.round_concluded && !self.halted
    }

    pub fn start(&mut self, events: &mut Vec<LocalEvent>) -> AbaAction {
        debug_assert_eq!(self.round, 0);
        self.enter_round(1, events)
    }

    fn enter_round(&mut self, r: Round, events: &mut Vec<LocalEvent>) -> AbaAction {
        self.round = r;
        self.max_round = self.max_round.max(r);
        self.vote_done = None;
        self.icc_started = false;
        self.round_concluded = false;
        events.push(LocalEvent::RoundEntered { round: r });
        AbaAction::StartVote { round: r, input: self.estimate }
    }

    /// Feeds the local vote result for the current round.
    pub fn on_vote_output(&mut self, round: Round, result: (Option<bool>, u8)) -> AbaAction {
        if round != self.round || self.vote_done.is_some() || self.halted {
            return AbaAction::None;
        }
        self.vote_done = Some(result);
        if !self.icc_started {
            self.icc_started = true;
            return AbaAction::StartIcc { round };
        }
        AbaAction::None
    }

    /// Feeds the local coin output for the current round; concludes it.
    pub fn on_coin_output(
        &mut self,
        round: Round,
        coin: bool,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) -> AbaAction {
        if round != self.round || self.round_concluded || self.halted {
            return AbaAction::None;
        }
        let Some((value, grade)) = self.vote_done else { return AbaAction::None };
        self.round_concluded = true;
        match grade {
            2 => {
                let y = value.expect("grade 2 carries a value");
                self.estimate = y;
                if !self.complete_emitted {
                    self.complete_emitted = true;
                    self.completing_round = Some(round);
                    acast
                        .start(
                            Topic::CompleteWith { round },
                            Payload::CompleteWith(y).encode(),
                            out,
                        )
                        .expect("one completion announcement per process");
                    events.push(LocalEvent::CompleteWithSent { round, value: y });
                }
            }
            1 => {
                self.estimate = value.expect("grade 1 carries a value");
            }
            _ => {
                self.estimate = coin;
            }
        }
        events.push(LocalEvent::EstimateSet { round, next: self.estimate });
        if self.output.is_some() {
            self.halted = true;
            return AbaAction::None;
        }
        if let Some(r0) = self.completing_round {
            if round > r0 {
                // This was the one extra round; stop joining new instances.
                self.halted = true;
                return AbaAction::None;
            }
        }
        self.enter_round(round + 1, events)
    }

    /// Tally of `complete with` announcements; `t+1` matching senders decide.
    pub fn on_complete_with(
        &mut self,
        from: ProcessId,
        value: bool,
        events: &mut Vec<LocalEvent>,
    ) {
        if !self.complete_seen.insert(from) {
            return;
        }
        let senders = self.tally.entry(value).or_default();
        senders.insert(from);
        if senders.len() >= self.t + 1 && self.output.is_none() {
            self.output = Some(value);
            events.push(LocalEvent::Decided { value });
        }
    }
}
