//! Graded voting: detects a majority among binary inputs and grades the
//! confidence 2 (overwhelming), 1 (distinct), or 0 (none, value withheld).
//!
//! All traffic is broadcast. Vote and revote entries are admitted only when
//! their supporting set is entry-wise contained in ours and the announced
//! bit really is the recomputed majority of that set; malformed entries are
//! excluded, not errors. Majority ties resolve to 0.

use std::collections::BTreeMap;

use crate::acast::AcastBook;
use crate::msg::{Envelope, Payload, Topic};
use crate::process::LocalEvent;
use crate::{ProcessId, Round};

/// Majority bit with ties resolving to 0.
fn majority<'a, I: Iterator<Item = &'a bool>>(bits: I) -> bool {
    let (mut ones, mut total) = (0usize, 0usize);
    for &b in bits {
        total += 1;
        ones += b as usize;
    }
    2 * ones > total
}

type VoteEntry = (BTreeMap<ProcessId, bool>, bool);

/// One process's state for one voting instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoteInstance {
    me: ProcessId,
    n: usize,
    t: usize,
    round: Round,
    input: Option<bool>,
    /// Script-A: delivered inputs, with delivery order for the freeze.
    a_grow: BTreeMap<ProcessId, bool>,
    a_order: Vec<ProcessId>,
    a_frozen: Option<BTreeMap<ProcessId, bool>>,
    vote_emitted: bool,
    /// Delivered votes pending or admitted; admission recorded in b_grow.
    votes: BTreeMap<ProcessId, VoteEntry>,
    /// Script-B: admitted votes, with admission order for the freeze.
    b_grow: BTreeMap<ProcessId, VoteEntry>,
    b_order: Vec<ProcessId>,
    b_frozen: Option<BTreeMap<ProcessId, VoteEntry>>,
    revote_emitted: bool,
    revotes: BTreeMap<ProcessId, (BTreeMap<ProcessId, VoteEntry>, bool)>,
    /// Script-C: admitted revotes (only the revote bit matters afterwards).
    c_grow: BTreeMap<ProcessId, bool>,
    output: Option<(Option<bool>, u8)>,
    output_announced: bool,
}

impl VoteInstance {
    pub fn new(me: ProcessId, n: usize, t: usize, round: Round) -> Self {
        Self {
            me,
            n,
            t,
            round,
            input: None,
            a_grow: BTreeMap::new(),
            a_order: Vec::new(),
            a_frozen: None,
            vote_emitted: false,
            votes: BTreeMap::new(),
            b_grow: BTreeMap::new(),
            b_order: Vec::new(),
            b_frozen: None,
            revote_emitted: false,
            revotes: BTreeMap::new(),
            c_grow: BTreeMap::new(),
            output: None,
            output_announced: false,
        }
    }

    pub fn output(&self) -> Option<(Option<bool>, u8)> {
        self.output
    }

    pub fn take_fresh_output(&mut self) -> Option<(Option<bool>, u8)> {
        if self.output_announced {
            return None;
        }
        if let Some(o) = self.output {
            self.output_announced = true;
            Some(o)
        } else {
            None
        }
    }

    /// Step 1: broadcast the input bit.
    pub fn start(&mut self, input: bool, acast: &mut AcastBook, out: &mut Vec<Envelope>) {
        if self.input.is_some() {
            return;
        }
        self.input = Some(input);
        acast
            .start(Topic::VoteInput { round: self.round }, Payload::VoteInput(input).encode(), out)
            .expect("one vote input per round");
    }

    /// Step 2 input: a delivered `(j, x_j)`.
    pub fn on_input(
        &mut self,
        j: ProcessId,
        x: bool,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        if let std::collections::btree_map::Entry::Vacant(e) = self.a_grow.entry(j) {
            e.insert(x);
            self.a_order.push(j);
        }
        self.progress(acast, out, events);
    }

    /// Step 4 input: a delivered `(j, A_j, a_j)`.
    pub fn on_vote(
        &mut self,
        j: ProcessId,
        entries: Vec<(ProcessId, bool)>,
        bit: bool,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let set: BTreeMap<ProcessId, bool> = entries.iter().copied().collect();
        // Honest supporting sets are frozen at exactly n-t distinct entries
        // whose announced bit is the majority; anything else is discarded.
        if set.len() != entries.len() || set.len() != self.n - self.t {
            return;
        }
        if majority(set.values()) != bit {
            return;
        }
        self.votes.entry(j).or_insert((set, bit));
        self.progress(acast, out, events);
    }

    /// Step 6 input: a delivered `(j, B_j, b_j)`.
    pub fn on_revote(
        &mut self,
        j: ProcessId,
        entries: Vec<(ProcessId, Vec<(ProcessId, bool)>, bool)>,
        bit: bool,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let mut set: BTreeMap<ProcessId, VoteEntry> = BTreeMap::new();
        for (p, a, x) in &entries {
            let a_map: BTreeMap<ProcessId, bool> = a.iter().copied().collect();
            if a_map.len() != a.len() {
                return;
            }
            set.insert(*p, (a_map, *x));
        }
        if set.len() != entries.len() || set.len() != self.n - self.t {
            return;
        }
        if majority(set.values().map(|(_, x)| x)) != bit {
            return;
        }
        self.revotes.entry(j).or_insert((set, bit));
        self.progress(acast, out, events);
    }

    fn progress(&mut self, acast: &mut AcastBook, out: &mut Vec<Envelope>, events: &mut Vec<LocalEvent>) {
        // Step 3: freeze A at n-t, vote its majority. Entries can pile up
        // before this instance starts, so the snapshot takes the first n-t
        // in delivery order.
        if !self.vote_emitted && self.input.is_some() && self.a_grow.len() >= self.n - self.t {
            let frozen: BTreeMap<ProcessId, bool> = self
                .a_order
                .iter()
                .take(self.n - self.t)
                .map(|&p| (p, self.a_grow[&p]))
                .collect();
            let bit = majority(frozen.values());
            self.a_frozen = Some(frozen.clone());
            self.vote_emitted = true;
            let entries: Vec<(ProcessId, bool)> = frozen.into_iter().collect();
            acast
                .start(
                    Topic::VoteVote { round: self.round },
                    Payload::Vote { entries, bit }.encode(),
                    out,
                )
                .expect("one vote per round");
        }
        // Step 4: admit votes whose support is contained in script-A.
        if self.a_frozen.is_some() || !self.a_grow.is_empty() {
            let admit: Vec<ProcessId> = self
                .votes
                .iter()
                .filter(|(j, _)| !self.b_grow.contains_key(j))
                .filter(|(_, (set, _))| {
                    set.iter().all(|(p, x)| self.a_grow.get(p) == Some(x))
                })
                .map(|(&j, _)| j)
                .collect();
            for j in admit {
                let entry = self.votes[&j].clone();
                self.b_grow.insert(j, entry);
                self.b_order.push(j);
            }
        }
        // Step 5: freeze B at n-t, revote the majority of vote bits.
        if !self.revote_emitted && self.vote_emitted && self.b_grow.len() >= self.n - self.t {
            let frozen: BTreeMap<ProcessId, VoteEntry> = self
                .b_order
                .iter()
                .take(self.n - self.t)
                .map(|&p| (p, self.b_grow[&p].clone()))
                .collect();
            let bit = majority(frozen.values().map(|(_, x)| x));
            self.b_frozen = Some(frozen.clone());
            self.revote_emitted = true;
            let entries: Vec<(ProcessId, Vec<(ProcessId, bool)>, bool)> = frozen
                .into_iter()
                .map(|(p, (a, x))| (p, a.into_iter().collect(), x))
                .collect();
            acast
                .start(
                    Topic::VoteRevote { round: self.round },
                    Payload::Revote { entries, bit }.encode(),
                    out,
                )
                .expect("one revote per round");
        }
        // Step 6: admit revotes whose support is contained in script-B.
        let admit: Vec<ProcessId> = self
            .revotes
            .iter()
            .filter(|(j, _)| !self.c_grow.contains_key(j))
            .filter(|(_, (set, _))| {
                set.iter().all(|(p, e)| self.b_grow.get(p) == Some(e))
            })
            .map(|(&j, _)| j)
            .collect();
        for j in admit {
            let bit = self.revotes[&j].1;
            self.c_grow.insert(j, bit);
        }
        // Step 7: evaluate once C holds n-t entries. Gated on our own
        // revote so a backlog delivered before this instance starts cannot
        // produce an output ahead of steps 1-6.
        if self.output.is_none() && self.revote_emitted && self.c_grow.len() >= self.n - self.t {
            self.decide_output(events);
        }
    }

    fn decide_output(&mut self, events: &mut Vec<LocalEvent>) {
        let b = self.b_frozen.as_ref().expect("C admission implies B froze");
        let first_vote = b.values().next().expect("B is nonempty").1;
        let result = if b.values().all(|(_, x)| *x == first_vote) {
            (Some(first_vote), 2u8)
        } else {
            let first_revote = *self.c_grow.values().next().expect("C is nonempty");
            if self.c_grow.values().all(|&x| x == first_revote) {
                (Some(first_revote), 1)
            } else {
                (None, 0)
            }
        };
        self.output = Some(result);
        events.push(LocalEvent::VoteOutput {
            round: self.round,
            value: result.0,
            grade: result.1,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed_unanimous(me: u32, inputs: &[(u32, bool)]) -> VoteInstance {
        let (n, t) = (4usize, 1usize);
        let mut v = VoteInstance::new(ProcessId(me), n, t, 1);
        let mut acast = AcastBook::new(ProcessId(me), n, t);
        let mut out = Vec::new();
        let mut events = Vec::new();
        v.start(inputs.iter().find(|(j, _)| *j == me).unwrap().1, &mut acast, &mut out);
        for &(j, x) in inputs {
            v.on_input(ProcessId(j), x, &mut acast, &mut out, &mut events);
        }
        // echo back everyone's votes and revotes as a fault-free network would
        let votes: Vec<(ProcessId, bool)> =
            inputs.iter().take(n - t).map(|&(j, x)| (ProcessId(j), x)).collect();
        let bit = majority(votes.iter().map(|(_, x)| x));
        for &(j, _) in inputs {
            v.on_vote(ProcessId(j), votes.clone(), bit, &mut acast, &mut out, &mut events);
        }
        let revote_entries: Vec<(ProcessId, Vec<(ProcessId, bool)>, bool)> = inputs
            .iter()
            .take(n - t)
            .map(|&(j, _)| (ProcessId(j), votes.clone(), bit))
            .collect();
        for &(j, _) in inputs {
            v.on_revote(ProcessId(j), revote_entries.clone(), bit, &mut acast, &mut out, &mut events);
        }
        v
    }

    #[test]
    fn unanimous_inputs_reach_grade_two() {
        let v = feed_unanimous(1, &[(1, true), (2, true), (3, true), (4, true)]);
        assert_eq!(v.output(), Some((Some(true), 2)));
    }

    #[test]
    fn majority_ties_resolve_to_zero() {
        assert!(!majority([true, false].iter()));
        assert!(!majority([].iter()));
        assert!(majority([true, true, false].iter()));
    }

    #[test]
    fn undersized_vote_sets_are_excluded() {
        let mut v = VoteInstance::new(ProcessId(1), 4, 1, 1);
        let mut acast = AcastBook::new(ProcessId(1), 4, 1);
        let mut out = Vec::new();
        let mut events = Vec::new();
        v.on_vote(ProcessId(2), vec![(ProcessId(1), true)], true, &mut acast, &mut out, &mut events);
        assert!(v.votes.is_empty());
        // wrong majority bit is also excluded
        v.on_vote(
            ProcessId(2),
            vec![(ProcessId(1), true), (ProcessId(2), true), (ProcessId(3), false)],
            false,
            &mut acast,
            &mut out,
            &mut events,
        );
        assert!(v.votes.is_empty());
    }
}
