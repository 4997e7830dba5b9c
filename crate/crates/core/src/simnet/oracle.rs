//! Test-only oracle with global visibility: collects dealt rows, candidate
//! sets, outputs, and coin bookkeeping across all correct processes, then
//! evaluates the run-level checks (divergence events, faulty-pair sanity,
//! bad-round budget, coin core-set containment, grade soundness).

use std::collections::{BTreeMap, BTreeSet};

use crate::field::{Fe, Field};
use crate::msg::IvssInstanceId;
use crate::poly::{interpolate_symmetric, Interpolation, UniPoly};
use crate::process::LocalEvent;
use crate::{Pair, ProcessId, Round};

/// One divergent reconstruction output: a correct process produced `got`
/// where the instance-defined secret is `defined`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Divergence {
    pub instance: IvssInstanceId,
    pub process: ProcessId,
    pub got: Fe,
    pub defined: Fe,
}

#[derive(Debug, Default)]
pub struct Oracle {
    t: usize,
    n: usize,
    corrupt: BTreeSet<ProcessId>,
    /// Rows delivered by dealers to correct processes.
    dealt_rows: BTreeMap<IvssInstanceId, BTreeMap<ProcessId, UniPoly>>,
    /// First candidate set seen per instance (broadcast agreement makes the
    /// choice immaterial).
    m_sets: BTreeMap<IvssInstanceId, BTreeSet<ProcessId>>,
    /// Reconstruction outputs of correct processes.
    outputs: BTreeMap<IvssInstanceId, BTreeMap<ProcessId, Fe>>,
    /// Candidate sets that passed the full equal/checked conditions at a
    /// correct process.
    pub accepted_sets: Vec<(IvssInstanceId, Vec<ProcessId>)>,
    /// First correct Reconstruct-Enabled per round: accept-set views.
    re_first: BTreeMap<Round, Vec<(ProcessId, Vec<ProcessId>)>>,
    /// Coin outputs of correct processes, with the accepted H set.
    coin: BTreeMap<Round, BTreeMap<ProcessId, (bool, Vec<ProcessId>)>>,
    vote_outputs: BTreeMap<Round, BTreeMap<ProcessId, (Option<bool>, u8)>>,
    /// Associated values: (round, member) -> per correct process.
    assoc: BTreeMap<(Round, ProcessId), BTreeMap<ProcessId, u64>>,
    estimates: BTreeMap<Round, BTreeMap<ProcessId, bool>>,
    pub decided: BTreeMap<ProcessId, bool>,
    pub max_round: Round,
}

impl Oracle {
    pub fn new(n: usize, t: usize, corrupt: BTreeSet<ProcessId>) -> Self {
        Self { n, t, corrupt, ..Default::default() }
    }

    pub fn correct(&self, p: ProcessId) -> bool {
        !self.corrupt.contains(&p)
    }

    /// Records a dealer row delivered to a correct process.
    pub fn on_row_delivered(&mut self, id: IvssInstanceId, to: ProcessId, coeffs: &[Fe]) {
        if !self.correct(to) {
            return;
        }
        self.dealt_rows
            .entry(id)
            .or_default()
            .entry(to)
            .or_insert_with(|| UniPoly::new(coeffs.to_vec()));
    }

    pub fn on_event(&mut self, p: ProcessId, event: LocalEvent) {
        if !self.correct(p) {
            // Corrupt processes run the honest machine; their observations
            // are not evidence.
            return;
        }
        match event {
            LocalEvent::RoundEntered { round } => {
                self.max_round = self.max_round.max(round);
            }
            LocalEvent::CandidateSeen { id, members } => {
                self.m_sets.entry(id).or_insert_with(|| members.into_iter().collect());
            }
            LocalEvent::CandidateAccepted { id, members } => {
                self.accepted_sets.push((id, members));
            }
            LocalEvent::IvssOutput { id, value } => {
                self.outputs.entry(id).or_default().insert(p, value);
            }
            LocalEvent::ReconstructEnabled { round, views, .. } => {
                self.re_first.entry(round).or_insert(views);
            }
            LocalEvent::AssociatedValue { round, member, value } => {
                self.assoc.entry((round, member)).or_default().insert(p, value);
            }
            LocalEvent::CoinOutput { round, value, via_h } => {
                self.coin.entry(round).or_default().insert(p, (value, via_h));
            }
            LocalEvent::VoteOutput { round, value, grade } => {
                self.vote_outputs.entry(round).or_default().insert(p, (value, grade));
            }
            LocalEvent::EstimateSet { round, next } => {
                self.estimates.entry(round).or_default().insert(p, next);
            }
            LocalEvent::Decided { value } => {
                self.decided.entry(p).or_insert(value);
            }
            LocalEvent::FpAdded { .. }
            | LocalEvent::ReadyRecorded { .. }
            | LocalEvent::CompleteWithSent { .. } => {}
        }
    }

    /// The secret an instance defines: the interpolation of the rows dealt
    /// to the correct candidate-set members. `None` when the instance never
    /// pinned one down (no candidate set, too few rows, or inconsistency).
    pub fn defined_secret(&self, id: &IvssInstanceId, field: Field) -> Option<Fe> {
        let m = self.m_sets.get(id)?;
        let rows = self.dealt_rows.get(id)?;
        let member_rows: BTreeMap<ProcessId, UniPoly> = rows
            .iter()
            .filter(|(p, _)| m.contains(p) && self.correct(**p))
            .map(|(p, r)| (*p, r.clone()))
            .collect();
        if member_rows.len() < self.t + 1 {
            return None;
        }
        match interpolate_symmetric(&member_rows, self.t, field) {
            Ok(Interpolation::Consistent(f)) => Some(f.secret()),
            _ => None,
        }
    }

    /// Every divergence: a correct output differing from the defined secret.
    pub fn divergences(&self, field: Field) -> Vec<Divergence> {
        let mut out = Vec::new();
        for (id, outputs) in &self.outputs {
            let Some(defined) = self.defined_secret(id, field) else { continue };
            for (&p, &got) in outputs {
                if got != defined {
                    out.push(Divergence { instance: *id, process: p, got, defined });
                }
            }
        }
        out
    }

    /// Rounds in which a divergence event occurred.
    pub fn event_rounds(&self, field: Field) -> BTreeSet<Round> {
        self.divergences(field).iter().map(|d| d.instance.round).collect()
    }

    /// Per-instance reconstruction report (used by the sharing-only mode).
    pub fn instance_outputs(&self, id: &IvssInstanceId) -> BTreeMap<ProcessId, Fe> {
        self.outputs.get(id).cloned().unwrap_or_default()
    }

    /// All correct deciders agree.
    pub fn agreement_holds(&self) -> bool {
        let mut values = self.decided.values();
        match values.next() {
            None => true,
            Some(first) => values.all(|v| v == first),
        }
    }

    /// Grade soundness per vote instance: a grade-2 output for one value
    /// forbids any graded output for the other.
    pub fn grade_soundness_holds(&self) -> bool {
        for outputs in self.vote_outputs.values() {
            for (&p, &(v, g)) in outputs {
                if g != 2 {
                    continue;
                }
                for (&q, &(w, h)) in outputs {
                    if q == p {
                        continue;
                    }
                    if h >= 1 && w != v {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The core-set containment of the coin: processes accepted by `t+1`
    /// members of the first correct enabler's S view must be at least a
    /// third of the system and be contained in every accepted H.
    pub fn coin_core_holds(&self) -> bool {
        for (round, views) in &self.re_first {
            let mut counts: BTreeMap<ProcessId, usize> = BTreeMap::new();
            for (_, a_l) in views {
                for &k in a_l {
                    *counts.entry(k).or_default() += 1;
                }
            }
            let core: BTreeSet<ProcessId> = counts
                .iter()
                .filter(|(_, &c)| c >= self.t + 1)
                .map(|(&k, _)| k)
                .collect();
            if 3 * core.len() < self.n {
                return false;
            }
            if let Some(outputs) = self.coin.get(round) {
                for (_, (_, via_h)) in outputs.values().enumerate().map(|(i, v)| (i, v)) {
                    let h: BTreeSet<ProcessId> = via_h.iter().copied().collect();
                    if !core.is_subset(&h) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Coin verdict per round: `Some(v)` when every correct process that
    /// completed the coin output `v`, `None` on divergence or no data.
    pub fn coin_rounds(&self) -> BTreeMap<Round, Option<bool>> {
        self.coin
            .iter()
            .map(|(&r, outputs)| {
                let mut vals = outputs.values().map(|(v, _)| *v);
                let verdict = match vals.next() {
                    None => None,
                    Some(first) => {
                        if vals.all(|v| v == first) {
                            Some(first)
                        } else {
                            None
                        }
                    }
                };
                (r, verdict)
            })
            .collect()
    }

    /// Vote outputs of correct processes per round.
    pub fn vote_outputs(&self) -> BTreeMap<Round, Vec<(ProcessId, Option<bool>, u8)>> {
        self.vote_outputs
            .iter()
            .map(|(&r, m)| (r, m.iter().map(|(&p, &(v, g))| (p, v, g)).collect()))
            .collect()
    }

    /// Per-round agreement of the next estimates among correct processes
    /// that concluded the round.
    pub fn estimate_rounds(&self) -> BTreeMap<Round, bool> {
        self.estimates
            .iter()
            .map(|(&r, m)| {
                let mut vals = m.values();
                let first = vals.next().expect("nonempty by construction");
                (r, vals.all(|v| v == first))
            })
            .collect()
    }

    /// Faulty-pair sanity: no pair of two correct processes in any correct
    /// process's FP set. The caller passes each correct FP set.
    pub fn fp_pairs_sane(&self, fp: &BTreeSet<Pair>) -> bool {
        fp.iter().all(|(a, b)| self.corrupt.contains(a) || self.corrupt.contains(b))
    }

    /// Value fixation: all correct processes that compute a member's
    /// associated value compute the same one, except in rounds where a
    /// divergence event occurred (where the protocol trades the guarantee
    /// for inferred pairs).
    pub fn value_fixation_holds(&self, event_rounds: &BTreeSet<Round>) -> bool {
        for ((round, _), values) in &self.assoc {
            if event_rounds.contains(round) {
                continue;
            }
            let mut vals = values.values();
            if let Some(first) = vals.next() {
                if vals.any(|v| v != first) {
                    return false;
                }
            }
        }
        true
    }
}
