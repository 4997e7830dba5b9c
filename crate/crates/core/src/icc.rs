//! Inferable common coin for one round.
//!
//! Every process deals `n` random secrets (the `j`th assigned to process
//! `j`), tracks which dealers' batches completed, exchanges attach/accept
//! bookkeeping, reconstructs the secrets attached to accepted processes, and
//! extracts a bit from the values modulo `u = ceil(0.87 n)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::acast::AcastBook;
use crate::field::{Fe, Field};
use crate::ivss::IvssBook;
use crate::msg::{Envelope, IvssInstanceId, Payload, Topic};
use crate::process::LocalEvent;
use crate::{ProcessId, Round};

/// `u = ceil(0.87 n)`, the coin modulus.
pub fn coin_modulus(n: usize) -> u64 {
    (87 * n as u64 + 99) / 100
}

/// Per-round coin state of one process.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IccRound {
    me: ProcessId,
    n: usize,
    t: usize,
    round: Round,
    started: bool,
    /// Completed sharings per dealer (by counter).
    dealer_done: BTreeMap<ProcessId, BTreeSet<u32>>,
    /// Dealers whose full batch completed (the growing script-T).
    t_grow: BTreeSet<ProcessId>,
    t_frozen: Option<BTreeSet<ProcessId>>,
    attach_emitted: bool,
    /// Delivered attach sets, size-validated to `t+1`.
    attaches: BTreeMap<ProcessId, BTreeSet<ProcessId>>,
    /// Accepted processes (the growing script-A).
    a_grow: BTreeSet<ProcessId>,
    a_frozen: Option<BTreeSet<ProcessId>>,
    accepts_emitted: bool,
    /// Delivered accept sets, size-validated to `n-t`.
    accepts: BTreeMap<ProcessId, BTreeSet<ProcessId>>,
    /// Processes whose accept set we contain (the growing script-S).
    s_grow: BTreeSet<ProcessId>,
    re_emitted: bool,
    /// Delivered `(H, S)` pairs in delivery order, first per sender.
    hs_delivered: Vec<(ProcessId, BTreeSet<ProcessId>, BTreeSet<ProcessId>)>,
    hs_seen: BTreeSet<ProcessId>,
    /// Reconstruction outputs for this round's instances.
    y_vals: BTreeMap<IvssInstanceId, Fe>,
    /// Associated values per accepted process.
    v_assoc: BTreeMap<ProcessId, u64>,
    output: Option<bool>,
    output_announced: bool,
}

impl IccRound {
    pub fn new(me: ProcessId, n: usize, t: usize, round: Round) -> Self {
        Self {
            me,
            n,
            t,
            round,
            started: false,
            dealer_done: BTreeMap::new(),
            t_grow: BTreeSet::new(),
            t_frozen: None,
            attach_emitted: false,
            attaches: BTreeMap::new(),
            a_grow: BTreeSet::new(),
            a_frozen: None,
            accepts_emitted: false,
            accepts: BTreeMap::new(),
            s_grow: BTreeSet::new(),
            re_emitted: false,
            hs_delivered: Vec::new(),
            hs_seen: BTreeSet::new(),
            y_vals: BTreeMap::new(),
            v_assoc: BTreeMap::new(),
            output: None,
            output_announced: false,
        }
    }

    pub fn output(&self) -> Option<bool> {
        self.output
    }

    /// Marks the output as consumed by the agreement loop.
    pub fn take_fresh_output(&mut self) -> Option<bool> {
        if self.output_announced {
            return None;
        }
        if let Some(v) = self.output {
            self.output_announced = true;
            Some(v)
        } else {
            None
        }
    }

    /// Steps 1-2: deal `n` fresh secrets. Coin secrets are drawn from
    /// `[0, u * floor(p/u))` so the value modulo `u` is exactly uniform.
    pub fn start(
        &mut self,
        rng: &mut ChaCha8Rng,
        field: Field,
        ivss: &mut IvssBook,
        out: &mut Vec<Envelope>,
    ) {
        if self.started {
            return;
        }
        self.started = true;
        let u = coin_modulus(self.n);
        let bound = u * (field.modulus() / u);
        for j in 1..=self.n as u32 {
            let secret = Fe(rng.gen_range(0..bound));
            let id = IvssInstanceId { dealer: self.me, round: self.round, counter: j - 1 };
            ivss.share_start(id, secret, rng, out).expect("fresh coin instance ids");
        }
    }

    /// Instance of `x_{k,j}`: dealer `k`, counter `j-1`.
    fn instance(&self, k: ProcessId, j: ProcessId) -> IvssInstanceId {
        IvssInstanceId { dealer: k, round: self.round, counter: j.0 - 1 }
    }

    /// Tracks a completed sharing; step 3 fires the attach broadcast after
    /// `t+1` dealers have full batches.
    pub fn on_sharing_complete(
        &mut self,
        id: IvssInstanceId,
        ivss: &mut IvssBook,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        debug_assert_eq!(id.round, self.round);
        if id.counter >= self.n as u32 {
            return;
        }
        let done = self.dealer_done.entry(id.dealer).or_default();
        done.insert(id.counter);
        if done.len() == self.n && self.t_grow.insert(id.dealer) {
            if !self.attach_emitted && self.t_grow.len() == self.t + 1 {
                self.attach_emitted = true;
                self.t_frozen = Some(self.t_grow.clone());
                let members: Vec<ProcessId> = self.t_grow.iter().copied().collect();
                acast
                    .start(
                        Topic::Attach { round: self.round },
                        Payload::Attach(members).encode(),
                        out,
                    )
                    .expect("one attach per round");
            }
            self.recheck_accepts(ivss, acast, out, events);
        }
    }

    /// Step 4 input: a delivered `attach T_j to j`.
    pub fn on_attach(
        &mut self,
        j: ProcessId,
        t_set: Vec<ProcessId>,
        ivss: &mut IvssBook,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        // The analysis requires exactly t+1 attached dealers; other sizes
        // are not protocol-conform and are ignored.
        let set: BTreeSet<ProcessId> = t_set.iter().copied().collect();
        if set.len() != self.t + 1 || set.len() != t_set.len() {
            return;
        }
        if set.iter().any(|p| p.0 == 0 || p.0 > self.n as u32) {
            return;
        }
        self.attaches.entry(j).or_insert(set);
        self.recheck_accepts(ivss, acast, out, events);
    }

    fn recheck_accepts(
        &mut self,
        ivss: &mut IvssBook,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let mut joined = Vec::new();
        let candidates: Vec<ProcessId> = self
            .attaches
            .iter()
            .filter(|(j, t_set)| !self.a_grow.contains(j) && t_set.is_subset(&self.t_grow))
            .map(|(&j, _)| j)
            .collect();
        for j in candidates {
            self.a_grow.insert(j);
            for &k in &self.attaches[&j] {
                joined.push(self.instance(k, j));
            }
            // The accept set is snapshotted at exactly n-t members even when
            // several admissions land in one activation.
            if !self.accepts_emitted && self.a_grow.len() == self.n - self.t {
                self.accepts_emitted = true;
                self.a_frozen = Some(self.a_grow.clone());
                let members: Vec<ProcessId> = self.a_grow.iter().copied().collect();
                acast
                    .start(
                        Topic::Accepts { round: self.round },
                        Payload::Accepts(members).encode(),
                        out,
                    )
                    .expect("one accept per round");
            }
        }
        for id in joined {
            ivss.join_reconstruction(id, acast, out, events);
        }
        self.recheck_enables(acast, out, events);
        self.recompute_assoc(events);
        self.try_output(events);
    }

    /// Step 5 input: a delivered `j accepts A_j`.
    pub fn on_accepts(
        &mut self,
        j: ProcessId,
        a_set: Vec<ProcessId>,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let set: BTreeSet<ProcessId> = a_set.iter().copied().collect();
        if set.len() != self.n - self.t || set.len() != a_set.len() {
            return;
        }
        if set.iter().any(|p| p.0 == 0 || p.0 > self.n as u32) {
            return;
        }
        self.accepts.entry(j).or_insert(set);
        self.recheck_enables(acast, out, events);
    }

    fn recheck_enables(
        &mut self,
        acast: &mut AcastBook,
        out: &mut Vec<Envelope>,
        events: &mut Vec<LocalEvent>,
    ) {
        let admitted: Vec<ProcessId> = self
            .accepts
            .iter()
            .filter(|(l, a_set)| !self.s_grow.contains(l) && a_set.is_subset(&self.a_grow))
            .map(|(&l, _)| l)
            .collect();
        for l in admitted {
            self.s_grow.insert(l);
            // Snapshot at the moment the threshold is crossed: S is the
            // current script-S (exactly n-t entries), H the current script-A.
            if !self.re_emitted && self.s_grow.len() == self.n - self.t {
                self.re_emitted = true;
                let h: Vec<ProcessId> = self.a_grow.iter().copied().collect();
                let s: Vec<ProcessId> = self.s_grow.iter().copied().collect();
                let views: Vec<(ProcessId, Vec<ProcessId>)> = self
                    .s_grow
                    .iter()
                    .map(|l| (*l, self.accepts[l].iter().copied().collect()))
                    .collect();
                events.push(LocalEvent::ReconstructEnabled {
                    round: self.round,
                    h: h.clone(),
                    s: s.clone(),
                    views,
                });
                acast
                    .start(
                        Topic::ReconstructEnabled { round: self.round },
                        Payload::Unit.encode(),
                        out,
                    )
                    .expect("one enable per round");
                acast
                    .start(
                        Topic::HandSets { round: self.round },
                        Payload::HandSets(h, s).encode(),
                        out,
                    )
                    .expect("one snapshot pair per round");
            }
        }
        self.try_output(events);
    }

    /// Step 8 input: a delivered `(H, S)` pair.
    pub fn on_hand_sets(
        &mut self,
        j: ProcessId,
        h: Vec<ProcessId>,
        s: Vec<ProcessId>,
        events: &mut Vec<LocalEvent>,
    ) {
        if !self.hs_seen.insert(j) {
            return;
        }
        let h: BTreeSet<ProcessId> = h.into_iter().collect();
        let s: BTreeSet<ProcessId> = s.into_iter().collect();
        self.hs_delivered.push((j, h, s));
        self.try_output(events);
    }

    /// Step 6 bookkeeping: a reconstruction output for this round.
    pub fn on_ivss_output(&mut self, id: IvssInstanceId, value: Fe, events: &mut Vec<LocalEvent>) {
        debug_assert_eq!(id.round, self.round);
        self.y_vals.insert(id, value);
        self.recompute_assoc(events);
        self.try_output(events);
    }

    /// Step 7: associated value of each accepted process whose attached
    /// secrets are all reconstructed. Field values are summed as canonical
    /// integers and reduced modulo `u`.
    fn recompute_assoc(&mut self, events: &mut Vec<LocalEvent>) {
        let u = coin_modulus(self.n) as u128;
        for &j in &self.a_grow {
            if self.v_assoc.contains_key(&j) {
                continue;
            }
            let Some(t_set) = self.attaches.get(&j) else { continue };
            let mut sum: u128 = 0;
            let mut complete = true;
            for &k in t_set {
                let id = IvssInstanceId { dealer: k, round: self.round, counter: j.0 - 1 };
                match self.y_vals.get(&id) {
                    Some(y) => sum += y.0 as u128,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete {
                let v = (sum % u) as u64;
                self.v_assoc.insert(j, v);
                events.push(LocalEvent::AssociatedValue {
                    round: self.round,
                    member: j,
                    value: v,
                });
            }
        }
    }

    /// Step 8: output 0 iff some associated value in the first qualifying
    /// delivered `(H, S)` pair is 0, else 1. The output never changes.
    fn try_output(&mut self, events: &mut Vec<LocalEvent>) {
        if self.output.is_some() {
            return;
        }
        for (_, h, s) in &self.hs_delivered {
            if !h.is_subset(&self.a_grow) || !s.is_subset(&self.s_grow) {
                continue;
            }
            if !h.iter().all(|m| self.v_assoc.contains_key(m)) {
                continue;
            }
            let value = !h.iter().any(|m| self.v_assoc[m] == 0);
            self.output = Some(value);
            events.push(LocalEvent::CoinOutput {
                round: self.round,
                value,
                via_h: h.iter().copied().collect(),
            });
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_modulus_matches_ceiling() {
        assert_eq!(coin_modulus(4), 4); // ceil(3.48)
        assert_eq!(coin_modulus(5), 5); // ceil(4.35)
        assert_eq!(coin_modulus(7), 7); // ceil(6.09)
        assert_eq!(coin_modulus(100), 87);
        assert_eq!(coin_modulus(101), 88); // ceil(87.87)
    }

    fn round_with_hs(n: usize, t: usize) -> IccRound {
        let mut icc = IccRound::new(ProcessId(1), n, t, 1);
        // accepted everyone, so the subset checks pass
        icc.a_grow = (1..=n as u32).map(ProcessId).collect();
        icc.s_grow = icc.a_grow.clone();
        for j in 1..=n as u32 {
            icc.attaches.insert(ProcessId(j), [ProcessId(1), ProcessId(2)].into_iter().collect());
        }
        icc.hs_delivered.push((ProcessId(2), icc.a_grow.clone(), icc.s_grow.clone()));
        icc
    }

    #[test]
    fn associated_values_sum_then_reduce() {
        // T_j = {1, 2}, y values 3 and 5, u = 4 at n=4: v_j = 8 mod 4 = 0.
        let mut icc = round_with_hs(4, 1);
        let mut events = Vec::new();
        for j in 1..=4u32 {
            icc.on_ivss_output(
                IvssInstanceId { dealer: ProcessId(1), round: 1, counter: j - 1 },
                Fe(3),
                &mut events,
            );
            icc.on_ivss_output(
                IvssInstanceId { dealer: ProcessId(2), round: 1, counter: j - 1 },
                Fe(5),
                &mut events,
            );
        }
        assert_eq!(icc.v_assoc[&ProcessId(1)], 0);
        assert_eq!(icc.output(), Some(false), "a zero associated value forces output 0");
    }

    #[test]
    fn all_nonzero_values_give_one() {
        let mut icc = round_with_hs(4, 1);
        let mut events = Vec::new();
        for j in 1..=4u32 {
            icc.on_ivss_output(
                IvssInstanceId { dealer: ProcessId(1), round: 1, counter: j - 1 },
                Fe(1),
                &mut events,
            );
            icc.on_ivss_output(
                IvssInstanceId { dealer: ProcessId(2), round: 1, counter: j - 1 },
                Fe(1),
                &mut events,
            );
        }
        assert!(icc.v_assoc.values().all(|&v| v == 2));
        assert_eq!(icc.output(), Some(true));
    }

    #[test]
    fn all_zero_secrets_give_zero_values() {
        let mut icc = round_with_hs(4, 1);
        let mut events = Vec::new();
        for j in 1..=4u32 {
            for dealer in 1..=2u32 {
                icc.on_ivss_output(
                    IvssInstanceId { dealer: ProcessId(dealer), round: 1, counter: j - 1 },
                    Fe(0),
                    &mut events,
                );
            }
        }
        assert!(icc.v_assoc.values().all(|&v| v == 0));
        assert_eq!(icc.output(), Some(false));
    }

    #[test]
    fn malformed_attach_sizes_are_ignored() {
        let mut icc = IccRound::new(ProcessId(1), 4, 1, 1);
        let mut ivss = IvssBook::new(ProcessId(1), 4, 1, Field::default());
        let mut acast = crate::acast::AcastBook::new(ProcessId(1), 4, 1);
        let mut out = Vec::new();
        let mut events = Vec::new();
        icc.on_attach(ProcessId(2), vec![], &mut ivss, &mut acast, &mut out, &mut events);
        icc.on_attach(
            ProcessId(2),
            vec![ProcessId(1), ProcessId(2), ProcessId(3)],
            &mut ivss,
            &mut acast,
            &mut out,
            &mut events,
        );
        assert!(icc.attaches.is_empty());
    }
}
