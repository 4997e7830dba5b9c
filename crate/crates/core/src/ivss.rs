//! Inferable verifiable secret sharing and the round-history certification
//! protocol.
//!
//! One [`IvssBook`] holds everything a single process knows about every
//! sharing instance it has touched, plus the cross-instance certification
//! state: the faulty-pair set `FP`, own and delivered invocation histories
//! (`CoreInvocations`), and `checked` clearances in both directions.
//!
//! Every operation returns its effects through explicit out-parameters: the
//! broadcast engine, a wire outbox, and an event log consumed by metrics.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::acast::AcastBook;
use crate::field::{Fe, Field};
use crate::msg::{Envelope, IvssInstanceId, Payload, Topic, WireMessage};
use crate::poly::{check_interpolation_set, row, sample_symmetric, UniPoly};
use crate::process::LocalEvent;
use crate::{pair, Pair, ProcessId, Round};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IvssError {
    #[error("sharing instance {0:?} dealt twice")]
    DuplicateDeal(IvssInstanceId),
    #[error("process {me} cannot deal for instance of dealer {dealer}")]
    NotTheDealer { me: ProcessId, dealer: ProcessId },
}

/// Per-instance state of one sharing/reconstruction execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IvssInstance {
    /// Row received from the dealer.
    my_row: Option<UniPoly>,
    received_points: BTreeMap<ProcessId, Fe>,
    sent_equal: BTreeSet<ProcessId>,
    /// Delivered `equal:(i,j)` broadcasts, as ordered pairs.
    equal_seen: BTreeSet<(ProcessId, ProcessId)>,
    candidate_set: Option<BTreeSet<ProcessId>>,
    /// Dealer side: candidate set already broadcast.
    m_emitted: bool,
    /// Step-5 conditions verified locally.
    checks_passed: bool,
    /// Sharing adopted from a delivered invocation history.
    foreign_complete: bool,
    completion_announced: bool,
    /// Full reconstruction engaged (not just row publication).
    recon_active: bool,
    row_emitted: bool,
    recon_rows: BTreeMap<ProcessId, UniPoly>,
    recon_order: Vec<ProcessId>,
    interpolation: Option<(Fe, BTreeSet<ProcessId>)>,
    ready_emitted: bool,
    ready_from: BTreeSet<ProcessId>,
    output: Option<Fe>,
    /// Bitmask of ids whose reconstruction row this instance still owes for
    /// certification checks; all ids while the candidate set is unknown.
    missing_mask: u32,
}

impl IvssInstance {
    pub fn sharing_complete(&self) -> bool {
        self.checks_passed || self.foreign_complete
    }
    pub fn output(&self) -> Option<Fe> {
        self.output
    }
    pub fn candidate_set(&self) -> Option<&BTreeSet<ProcessId>> {
        self.candidate_set.as_ref()
    }
    pub fn interpolation(&self) -> Option<&(Fe, BTreeSet<ProcessId>)> {
        self.interpolation.as_ref()
    }
    pub fn ready_count(&self) -> usize {
        self.ready_from.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct CheckedSent {
    cleared: BTreeSet<Pair>,
    next_seq: u32,
}

/// All secret-sharing and certification state of one process.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IvssBook {
    me: ProcessId,
    n: usize,
    t: usize,
    field: Field,
    current_round: Round,
    instances: BTreeMap<IvssInstanceId, IvssInstance>,
    round_instances: BTreeMap<Round, BTreeSet<IvssInstanceId>>,
    dealt: BTreeSet<IvssInstanceId>,
    fp: BTreeSet<Pair>,
    core_own: BTreeMap<Round, BTreeSet<IvssInstanceId>>,
    core_delivered: BTreeMap<(ProcessId, Round), BTreeSet<IvssInstanceId>>,
    /// Contiguously delivered history prefix per owner: rounds `1..=prefix`.
    core_prefix: BTreeMap<ProcessId, Round>,
    /// Instances appearing in at least one delivered history.
    in_history: BTreeSet<IvssInstanceId>,
    /// Owners whose histories mention an instance.
    history_watchers: BTreeMap<IvssInstanceId, BTreeSet<ProcessId>>,
    /// Delivered clearances: (checker, owner, round) -> pairs.
    checked_recv: BTreeMap<(ProcessId, ProcessId, Round), BTreeSet<Pair>>,
    /// Own emitted clearances per (owner, round).
    checked_sent: BTreeMap<(ProcessId, Round), CheckedSent>,
    /// Sharing completions not yet consumed by the coin layer.
    pub newly_completed: Vec<IvssInstanceId>,
    /// Reconstruction outputs not yet consumed by the coin layer.
    pub newly_output: Vec<(IvssInstanceId, Fe)>,
}

fn bit(p: ProcessId) -> u32 {
    1 << (p.0 - 1)
}

impl IvssBook {
    pub fn new(me: ProcessId, n: usize, t: usize, field: Field) -> Self {
        Self {
            me,
            n,
            t,
            field,
            current_round: 0,
            instances: BTreeMap::new(),
            round_instances: BTreeMap::new(),
            dealt: BTreeSet::new(),
            fp: BTreeSet::new(),
            core_own: BTreeMap::new(),
            core_delivered: BTreeMap::new(),
            core_prefix: BTreeMap::new(),
            in_history: BTreeSet::new(),
            history_watchers: BTreeMap::new(),
            checked_recv: BTreeMap::new(),
            checked_sent: BTreeMap::new(),
            newly_completed: Vec::new(),
            newly_output: Vec::new(),
        }
    }

    pub fn fp(&self) -> &BTreeSet<Pair> {
        &self.fp
    }

    pub fn instance(&self, id: &IvssInstanceId) -> Option<&IvssInstance> {
        self.instances.get(id)
    }

    pub fn instances(&self) -> impl Iterator<Item = (&IvssInstanceId, &IvssInstance)> {
        self.instances.iter()
    }

    fn all_mask(&self) -> u32 {
        (1u32 << self.n) - 1
    }

    fn ensure_instance(&mut self, id: IvssInstanceId) -> &mut IvssInstance {
        let all = self.all_mask();
        self.round_instances.entry(id.round).or_default().insert(id);
        self.instances.entry(id).or_insert_with(|| IvssInstance {
            missing_mask: all,
            ..IvssInstance::default()
        })
    }

    /// Enters round `r`: seals and broadcasts the previous round's own
    /// invocation history and initializes the new bucket. For round 1 the
    /// broadcast history is the empty round-0 set, and all pairs are
    /// trivially cleared for every owner.
    pub fn round_begin(&mut self, r: Round, acast: &mut AcastBook, out: &mut Vec<Envelope>) {
        assert!(r >= 1 && r > self.current_round, "rounds advance monotonically");
        self.current_round = r;
        let prev = r - 1;
        let history: Vec<IvssInstanceId> =
            self.core_own.get(&prev).map(|s| s.iter().copied().collect()).unwrap_or_default();
        self.core_own.entry(r).or_default();
        acast
            .start(
                Topic::CoreInvocations { round: prev },
                Payload::CoreSet(history).encode(),
                out,
            )
            .expect("one history broadcast per round");
        if r == 1 {
            // Empty pre-protocol history: clear every pair for every owner.
            let pairs = self.universe_pairs();
            for owner in crate::all_ids(self.n) {
                self.emit_checked(owner, 1, pairs.clone(), acast, out);
            }
        }
    }

    fn universe_pairs(&self) -> Vec<Pair> {
        let mut v = Vec::new();
        for i in 1..=self.n as u32 {
            for j in i + 1..=self.n as u32 {
                v.push((ProcessId(i), ProcessId(j)));
            }
        }
        v
    }

    fn emit_checked(
        &mut self,
        owner: ProcessId,
        round: Round,
        pairs: Vec<Pair>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
    ) {
        if pairs.is_empty() {
            return;
        }
        let sent = self.checked_sent.entry((owner, round)).or_default();
        let fresh: Vec<Pair> = pairs.into_iter().filter(|p| sent.cleared.insert(*p)).collect();
        if fresh.is_empty() {
            return;
        }
        let seq = sent.next_seq;
        sent.next_seq += 1;
        acast
            .start(Topic::Checked { owner, round, seq }, Payload::Checked(fresh).encode(), out)
            .expect("checked batch topics are sequenced");
    }

    /// Sharing step 1: the dealer samples a symmetric polynomial for the
    /// secret and sends one row to each process over the private channel.
    pub fn share_start(
        &mut self,
        id: IvssInstanceId,
        secret: Fe,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<Envelope>,
    ) -> Result<(), IvssError> {
        if id.dealer != self.me {
            return Err(IvssError::NotTheDealer { me: self.me, dealer: id.dealer });
        }
        if !self.dealt.insert(id) {
            return Err(IvssError::DuplicateDeal(id));
        }
        self.ensure_instance(id);
        let f = sample_symmetric(secret, self.t, self.field, rng);
        for i in crate::all_ids(self.n) {
            out.push(Envelope {
                from: self.me,
                to: i,
                msg: WireMessage::Row { id, coeffs: row(&f, i, self.field).coeffs().to_vec() },
            });
        }
        Ok(())
    }

    /// Sharing step 2: on the dealer's row, send one point to every other
    /// process; each confirmed pair yields one `equal` broadcast, so an
    /// all-correct instance produces n(n-1) of them.
    pub fn handle_row(
        &mut self,
        id: IvssInstanceId,
        from: ProcessId,
        coeffs: Vec<Fe>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        if from != id.dealer {
            return;
        }
        let t = self.t;
        let me = self.me;
        let n = self.n;
        let field = self.field;
        let inst = self.ensure_instance(id);
        if inst.my_row.is_some() || coeffs.len() > t + 1 {
            return;
        }
        let poly = UniPoly::new(coeffs.iter().map(|c| field.reduce(c.0)).collect());
        for i in crate::all_ids(n).filter(|&i| i != me) {
            out.push(Envelope {
                from: me,
                to: i,
                msg: WireMessage::Point { id, value: poly.eval(i.point(), field) },
            });
        }
        inst.my_row = Some(poly);
        self.try_equal_all(id, acast, out);
        self.try_row_publish(id, acast, out);
        self.try_progress(id, acast, out, events);
    }

    /// Sharing step 3: confirm a matching point with `equal:(me, i)`.
    pub fn handle_point(
        &mut self,
        id: IvssInstanceId,
        from: ProcessId,
        value: Fe,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
    ) {
        let inst = self.ensure_instance(id);
        inst.received_points.entry(from).or_insert(value);
        self.try_equal(id, from, acast, out);
    }

    fn try_equal_all(&mut self, id: IvssInstanceId, acast: &mut AcastBook, out: &mut Vec<Envelope>) {
        let peers: Vec<ProcessId> = self
            .instances
            .get(&id)
            .map(|i| i.received_points.keys().copied().collect())
            .unwrap_or_default();
        for peer in peers {
            self.try_equal(id, peer, acast, out);
        }
    }

    fn try_equal(
        &mut self,
        id: IvssInstanceId,
        peer: ProcessId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
    ) {
        let me = self.me;
        let field = self.field;
        let Some(inst) = self.instances.get_mut(&id) else { return };
        let Some(row) = &inst.my_row else { return };
        let Some(&point) = inst.received_points.get(&peer) else { return };
        if inst.sent_equal.contains(&peer) {
            return;
        }
        // A mismatched point is never confirmed; the pair simply stays
        // unwitnessed.
        if row.eval(peer.point(), field) != point {
            return;
        }
        inst.sent_equal.insert(peer);
        acast
            .start(Topic::Equal { id, pair: (me, peer) }, Payload::Unit.encode(), out)
            .expect("one equal per (instance, peer)");
    }

    /// Delivery of `equal:(k,i)`.
    pub fn handle_equal(
        &mut self,
        id: IvssInstanceId,
        k: ProcessId,
        i: ProcessId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        if k.0 == 0 || k.0 > self.n as u32 || i.0 == 0 || i.0 > self.n as u32 {
            return;
        }
        self.ensure_instance(id).equal_seen.insert((k, i));
        self.try_progress(id, acast, out, events);
    }

    /// Delivery of the dealer's candidate set.
    pub fn handle_candidate_set(
        &mut self,
        id: IvssInstanceId,
        members: Vec<ProcessId>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let n = self.n;
        let t = self.t;
        let set: BTreeSet<ProcessId> = members.iter().copied().collect();
        if set.len() != members.len()
            || set.len() < n - t
            || set.iter().any(|p| p.0 == 0 || p.0 > n as u32)
        {
            return;
        }
        let inst = self.ensure_instance(id);
        if inst.candidate_set.is_some() {
            return;
        }
        inst.candidate_set = Some(set.clone());
        events.push(LocalEvent::CandidateSeen { id, members: set.iter().copied().collect() });
        self.refresh_missing_mask(id);
        self.infer_instance(id, events);
        self.recheck_watchers(id, acast, out);
        self.try_row_publish(id, acast, out);
        self.try_ready(id, acast, out, events);
        self.try_progress(id, acast, out, events);
    }

    /// Reconstruction step 1 delivery: a member's broadcast row.
    pub fn handle_recon_row(
        &mut self,
        id: IvssInstanceId,
        from: ProcessId,
        coeffs: Vec<Fe>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let t = self.t;
        let field = self.field;
        if coeffs.len() > t + 1 {
            return;
        }
        let inst = self.ensure_instance(id);
        if inst.recon_rows.contains_key(&from) {
            return;
        }
        inst.recon_rows
            .insert(from, UniPoly::new(coeffs.iter().map(|c| field.reduce(c.0)).collect()));
        inst.recon_order.push(from);
        // Inference before any clearance in the same activation.
        self.infer_with_row(id, from, events);
        self.refresh_missing_mask(id);
        self.recheck_watchers(id, acast, out);
        self.try_ready(id, acast, out, events);
    }

    /// Reconstruction step 3 input: `ready to complete` deliveries.
    pub fn handle_ready(
        &mut self,
        id: IvssInstanceId,
        from: ProcessId,
        events: &mut Vec<LocalEvent>,
    ) {
        self.ensure_instance(id).ready_from.insert(from);
        self.try_complete(id, events);
    }

    /// Joins the full reconstruction of an instance (the coin layer or the
    /// harness decides which instances to reconstruct).
    pub fn join_reconstruction(
        &mut self,
        id: IvssInstanceId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let inst = self.ensure_instance(id);
        if inst.recon_active {
            return;
        }
        inst.recon_active = true;
        self.try_row_publish(id, acast, out);
        self.try_ready(id, acast, out, events);
    }

    /// Certification step 2 receiver side: a delivered invocation history.
    pub fn handle_core_invocations(
        &mut self,
        owner: ProcessId,
        round: Round,
        ids: Vec<IvssInstanceId>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let key = (owner, round);
        if self.core_delivered.contains_key(&key) {
            return;
        }
        let set: BTreeSet<IvssInstanceId> = ids.into_iter().collect();
        for &id in &set {
            self.ensure_instance(id);
            self.in_history.insert(id);
            self.history_watchers.entry(id).or_default().insert(owner);
            // Step 4: adopt the sharing as complete and publish our row.
            let inst = self.instances.get_mut(&id).expect("just ensured");
            if !inst.foreign_complete {
                inst.foreign_complete = true;
                self.announce_completion(id);
            }
            self.infer_instance(id, events);
            self.try_row_publish(id, acast, out);
        }
        self.core_delivered.insert(key, set);
        if round >= 1 {
            let prefix = self.core_prefix.entry(owner).or_insert(0);
            while self.core_delivered.contains_key(&(owner, *prefix + 1)) {
                *prefix += 1;
            }
        }
        self.recheck_checked_for_owner(owner, acast, out);
    }

    /// Delivery of a `checked` clearance batch.
    pub fn handle_checked(
        &mut self,
        checker: ProcessId,
        owner: ProcessId,
        round: Round,
        pairs: Vec<Pair>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let entry = self.checked_recv.entry((checker, owner, round)).or_default();
        for (a, b) in pairs {
            if a.0 == 0 || a.0 > self.n as u32 || b.0 == 0 || b.0 > self.n as u32 || a == b {
                continue;
            }
            entry.insert(pair(a, b));
        }
        let ids: Vec<IvssInstanceId> =
            self.round_instances.get(&round).map(|s| s.iter().copied().collect()).unwrap_or_default();
        for id in ids {
            self.try_progress(id, acast, out, events);
        }
    }

    fn announce_completion(&mut self, id: IvssInstanceId) {
        let inst = self.instances.get_mut(&id).expect("instance exists");
        if inst.sharing_complete() && !inst.completion_announced {
            inst.completion_announced = true;
            self.newly_completed.push(id);
        }
    }

    /// Sharing steps 4 and 5: the dealer searches for a candidate set; every
    /// process verifies a delivered one.
    fn try_progress(
        &mut self,
        id: IvssInstanceId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        self.dealer_try_candidate_set(id, acast, out, events);
        self.share_try_complete(id, events);
    }

    /// Deterministic candidate-set scan: all size-`n-t` subsets of the ids in
    /// lexicographic order; the first fully equal and cleared one wins.
    fn dealer_try_candidate_set(
        &mut self,
        id: IvssInstanceId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        if id.dealer != self.me || !self.dealt.contains(&id) {
            return;
        }
        if self.instances.get(&id).map(|i| i.m_emitted).unwrap_or(true) {
            return;
        }
        let ids: Vec<ProcessId> = crate::all_ids(self.n).collect();
        let size = self.n - self.t;
        let found = combinations(ids.len(), size)
            .map(|idx| idx.into_iter().map(|k| ids[k]).collect::<BTreeSet<ProcessId>>())
            .find(|m| self.set_conditions_hold(id, m));
        if let Some(m) = found {
            let inst = self.instances.get_mut(&id).expect("dealer instance exists");
            inst.m_emitted = true;
            let members: Vec<ProcessId> = m.iter().copied().collect();
            events.push(LocalEvent::CandidateAccepted { id, members: members.clone() });
            acast
                .start(
                    Topic::CandidateSet { id },
                    Payload::CandidateSet(members).encode(),
                    out,
                )
                .expect("one candidate set per dealt instance");
        }
    }

    fn share_try_complete(&mut self, id: IvssInstanceId, events: &mut Vec<LocalEvent>) {
        let Some(inst) = self.instances.get(&id) else { return };
        if inst.checks_passed {
            return;
        }
        let Some(m) = inst.candidate_set.clone() else { return };
        if !self.set_conditions_hold(id, &m) {
            return;
        }
        let inst = self.instances.get_mut(&id).expect("instance exists");
        inst.checks_passed = true;
        events.push(LocalEvent::CandidateAccepted { id, members: m.iter().copied().collect() });
        self.announce_completion(id);
    }

    /// Conditions (a) and (b) of sharing steps 4/5 for a prospective set:
    /// every ordered pair confirmed equal, and every unordered pair cleared
    /// by every member for every member's history at this round.
    fn set_conditions_hold(&self, id: IvssInstanceId, m: &BTreeSet<ProcessId>) -> bool {
        let inst = match self.instances.get(&id) {
            Some(i) => i,
            None => return false,
        };
        for &i in m {
            for &j in m {
                if i != j && !inst.equal_seen.contains(&(i, j)) {
                    return false;
                }
            }
        }
        let members: Vec<ProcessId> = m.iter().copied().collect();
        for &p in &members {
            for &q in &members {
                let cleared = match self.checked_recv.get(&(p, q, id.round)) {
                    Some(c) => c,
                    None => return false,
                };
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        if !cleared.contains(&pair(i, j)) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Reconstruction step 1: broadcast our row once we are a member of a
    /// known candidate set and the reconstruction (or a delivered history)
    /// asks for it.
    fn try_row_publish(&mut self, id: IvssInstanceId, acast: &mut AcastBook, out: &mut Vec<Envelope>) {
        let me = self.me;
        let Some(inst) = self.instances.get_mut(&id) else { return };
        if inst.row_emitted || !(inst.recon_active || inst.foreign_complete) {
            return;
        }
        let Some(m) = &inst.candidate_set else { return };
        if !m.contains(&me) {
            return;
        }
        let Some(row) = &inst.my_row else { return };
        inst.row_emitted = true;
        let coeffs = row.coeffs().to_vec();
        acast
            .start(Topic::ReconRow { id }, Payload::ReconRow(coeffs).encode(), out)
            .expect("one reconstruction row per instance");
    }

    /// Reconstruction step 2: search delivered member rows for an
    /// interpolation set of exactly `n-2t` rows, in lexicographic order of
    /// delivery sequence; first success fixes the value.
    fn try_ready(
        &mut self,
        id: IvssInstanceId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let n = self.n;
        let t = self.t;
        let field = self.field;
        let Some(inst) = self.instances.get(&id) else { return };
        if inst.ready_emitted || !inst.recon_active {
            return;
        }
        let Some(m) = inst.candidate_set.clone() else { return };
        let ordered: Vec<ProcessId> =
            inst.recon_order.iter().copied().filter(|p| m.contains(p)).collect();
        let need = n - 2 * t;
        if ordered.len() < need {
            return;
        }
        let mut result = None;
        'search: for idx in combinations(ordered.len(), need) {
            let subset: BTreeSet<ProcessId> = idx.into_iter().map(|k| ordered[k]).collect();
            let candidates = &inst.recon_rows;
            match check_interpolation_set(candidates, &subset, &m, t, need, field) {
                Ok(Some(f)) => {
                    result = Some((f.secret(), subset));
                    break 'search;
                }
                Ok(None) => continue,
                Err(_) => continue,
            }
        }
        let Some((v, subset)) = result else { return };
        let bucket = id.round.max(self.current_round);
        let inst = self.instances.get_mut(&id).expect("instance exists");
        inst.ready_emitted = true;
        inst.interpolation = Some((v, subset));
        // Late entries go to the current bucket so the sealed history
        // broadcast for the instance's own round never mutates.
        self.core_own.entry(bucket).or_default().insert(id);
        events.push(LocalEvent::ReadyRecorded { id, bucket });
        acast
            .start(Topic::ReadyToComplete { id }, Payload::Unit.encode(), out)
            .expect("one ready per instance");
        self.try_complete(id, events);
    }

    /// Reconstruction step 3: output after `n-t` readies.
    fn try_complete(&mut self, id: IvssInstanceId, events: &mut Vec<LocalEvent>) {
        let n = self.n;
        let t = self.t;
        let Some(inst) = self.instances.get_mut(&id) else { return };
        if inst.output.is_some() || inst.interpolation.is_none() {
            return;
        }
        if inst.ready_from.len() < n - t {
            return;
        }
        let v = inst.interpolation.as_ref().expect("checked above").0;
        inst.output = Some(v);
        events.push(LocalEvent::IvssOutput { id, value: v });
        self.newly_output.push((id, v));
    }

    /// Certification step 3: pairwise row comparison for an instance named
    /// by some delivered history. Idempotent.
    fn infer_instance(&mut self, id: IvssInstanceId, events: &mut Vec<LocalEvent>) {
        if !self.in_history.contains(&id) {
            return;
        }
        let field = self.field;
        let Some(inst) = self.instances.get(&id) else { return };
        let Some(m) = &inst.candidate_set else { return };
        let mut found = Vec::new();
        let rows: Vec<(&ProcessId, &UniPoly)> =
            inst.recon_rows.iter().filter(|(p, _)| m.contains(p)).collect();
        for (a, (&i, fi)) in rows.iter().enumerate() {
            for (&j, fj) in rows[a + 1..].iter() {
                if fi.eval(j.point(), field) != fj.eval(i.point(), field) {
                    found.push(pair(i, j));
                }
            }
        }
        for p in found {
            if self.fp.insert(p) {
                events.push(LocalEvent::FpAdded { pair: p });
            }
        }
    }

    /// Incremental inference against one freshly delivered row.
    fn infer_with_row(&mut self, id: IvssInstanceId, from: ProcessId, events: &mut Vec<LocalEvent>) {
        if !self.in_history.contains(&id) {
            return;
        }
        let field = self.field;
        let Some(inst) = self.instances.get(&id) else { return };
        let Some(m) = &inst.candidate_set else { return };
        if !m.contains(&from) {
            return;
        }
        let Some(fnew) = inst.recon_rows.get(&from) else { return };
        let mut found = Vec::new();
        for (&j, fj) in &inst.recon_rows {
            if j == from || !m.contains(&j) {
                continue;
            }
            if fnew.eval(j.point(), field) != fj.eval(from.point(), field) {
                found.push(pair(from, j));
            }
        }
        for p in found {
            if self.fp.insert(p) {
                events.push(LocalEvent::FpAdded { pair: p });
            }
        }
    }

    fn refresh_missing_mask(&mut self, id: IvssInstanceId) {
        let all = self.all_mask();
        let Some(inst) = self.instances.get_mut(&id) else { return };
        inst.missing_mask = match &inst.candidate_set {
            None => all,
            Some(m) => m
                .iter()
                .filter(|p| !inst.recon_rows.contains_key(p))
                .fold(0u32, |acc, &p| acc | bit(p)),
        };
    }

    fn recheck_watchers(&mut self, id: IvssInstanceId, acast: &mut AcastBook, out: &mut Vec<Envelope>) {
        let owners: Vec<ProcessId> = self
            .history_watchers
            .get(&id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        for owner in owners {
            self.recheck_checked_for_owner(owner, acast, out);
        }
    }

    /// Certification step 5 for one owner: for every round whose full history
    /// prefix is delivered, clear every pair whose members have produced all
    /// rows that history demands of them and that is not a known faulty pair.
    fn recheck_checked_for_owner(
        &mut self,
        owner: ProcessId,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
    ) {
        let prefix = self.core_prefix.get(&owner).copied().unwrap_or(0);
        let mut blocked = 0u32;
        let mut batches: Vec<(Round, Vec<Pair>)> = Vec::new();
        for r in 1..=prefix + 1 {
            if r >= 2 {
                // accumulate blockers from the owner's round r-1 history
                if let Some(ids) = self.core_delivered.get(&(owner, r - 1)) {
                    for id in ids {
                        blocked |= self.instances.get(id).map(|i| i.missing_mask).unwrap_or(self.all_mask());
                    }
                }
            }
            if r == 1 {
                // handled unconditionally at round begin
                continue;
            }
            let sent = self.checked_sent.get(&(owner, r));
            let mut fresh = Vec::new();
            for i in 1..=self.n as u32 {
                if blocked & bit(ProcessId(i)) != 0 {
                    continue;
                }
                for j in i + 1..=self.n as u32 {
                    if blocked & bit(ProcessId(j)) != 0 {
                        continue;
                    }
                    let p = (ProcessId(i), ProcessId(j));
                    if self.fp.contains(&p) {
                        continue;
                    }
                    if sent.map(|s| s.cleared.contains(&p)).unwrap_or(false) {
                        continue;
                    }
                    fresh.push(p);
                }
            }
            if !fresh.is_empty() {
                batches.push((r, fresh));
            }
        }
        for (r, pairs) in batches {
            self.emit_checked(owner, r, pairs, acast, out);
        }
    }
}

/// Lexicographic `k`-combinations of `0..m`.
pub fn combinations(m: usize, k: usize) -> Combinations {
    Combinations { m, k, state: None, done: k > m }
}

pub struct Combinations {
    m: usize,
    k: usize,
    state: Option<Vec<usize>>,
    done: bool,
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        match &mut self.state {
            None => {
                let first: Vec<usize> = (0..self.k).collect();
                self.state = Some(first.clone());
                Some(first)
            }
            Some(idx) => {
                // advance the odometer from the rightmost digit
                let k = self.k;
                let m = self.m;
                if k == 0 {
                    self.done = true;
                    return None;
                }
                let mut pos = k;
                loop {
                    if pos == 0 {
                        self.done = true;
                        return None;
                    }
                    pos -= 1;
                    if idx[pos] < m - (k - pos) {
                        idx[pos] += 1;
                        for q in pos + 1..k {
                            idx[q] = idx[q - 1] + 1;
                        }
                        return Some(idx.clone());
                    }
                }
            }
        }
    }
}
