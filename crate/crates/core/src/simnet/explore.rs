//! Exhaustive schedule exploration for tiny configurations.
//!
//! The explorer enumerates delivery interleavings depth-first with state
//! deduplication, asserting a safety invariant on every reached state, up to
//! a node budget. Two worlds are provided: a single equivocating broadcast
//! and a single fault-free sharing instance.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use crate::acast::AcastBook;
use crate::field::Field;
use crate::msg::{AcastId, Envelope, Phase, Topic, Value, WireMessage};
use crate::process::{ProcessMode, ProcessState};
use crate::ProcessId;

/// A branching state: pending messages plus whatever machine state the
/// world carries.
pub trait World: Clone {
    fn pending(&self) -> usize;
    fn deliver(&mut self, index: usize);
    /// Safety invariant, checked on every explored state.
    fn check(&self) -> Result<(), String>;
    /// Extra invariant for quiescent states.
    fn check_terminal(&self) -> Result<(), String> {
        Ok(())
    }
    fn digest(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreReport {
    /// States expanded (branches taken).
    pub explored: usize,
    /// Distinct quiescent states reached.
    pub terminals: usize,
    /// Budget ran out before the frontier emptied.
    pub truncated: bool,
    pub violations: Vec<String>,
}

/// Depth-first exploration with dedup, bounded by `max_nodes` distinct
/// states. Children are generated lazily so the cost is one clone per
/// candidate state, not one per sibling.
pub fn schedule_explore<W: World>(root: W, max_nodes: usize) -> ExploreReport {
    let mut report =
        ExploreReport { explored: 0, terminals: 0, truncated: false, violations: Vec::new() };
    let mut seen: HashSet<u64> = HashSet::new();
    seen.insert(root.digest());
    let visit = |world: &W, report: &mut ExploreReport| -> bool {
        report.explored += 1;
        if let Err(v) = world.check() {
            report.violations.push(v);
            return false;
        }
        if world.pending() == 0 {
            report.terminals += 1;
            if let Err(v) = world.check_terminal() {
                report.violations.push(v);
            }
            return false;
        }
        true
    };
    // stack frames: a state plus the index of its next unexplored delivery
    let mut stack: Vec<(W, usize)> = Vec::new();
    if visit(&root, &mut report) {
        stack.push((root, 0));
    }
    while let Some((world, idx)) = stack.pop() {
        if report.explored >= max_nodes {
            report.truncated = true;
            break;
        }
        if idx >= world.pending() {
            continue;
        }
        let mut child = world.clone();
        child.deliver(idx);
        stack.push((world, idx + 1));
        if seen.insert(child.digest()) && visit(&child, &mut report) {
            stack.push((child, 0));
        }
    }
    report
}

/// One broadcast instance under an equivocating corrupt sender: the sender
/// opens with value `a` toward some correct processes and `b` toward the
/// rest, and feeds both values into every later phase. Correct processes
/// must never deliver different values.
#[derive(Clone)]
pub struct AcastEquivocationWorld {
    n: usize,
    books: Vec<AcastBook>,
    corrupt: ProcessId,
    pending: Vec<Envelope>,
}

impl AcastEquivocationWorld {
    pub fn new(n: usize, t: usize) -> Self {
        let corrupt = ProcessId(n as u32);
        let topic = Topic::VoteInput { round: 1 };
        let id = AcastId { sender: corrupt, topic };
        let a: Value = (*b"a").as_slice().into();
        let b: Value = (*b"b").as_slice().into();
        let books: Vec<AcastBook> =
            (1..n as u32).map(|i| AcastBook::new(ProcessId(i), n, t)).collect();
        let mut pending = Vec::new();
        let half = (n - 1) / 2 + 1;
        for (idx, to) in (1..n as u32).enumerate() {
            let value = if idx < half { a.clone() } else { b.clone() };
            pending.push(Envelope {
                from: corrupt,
                to: ProcessId(to),
                msg: WireMessage::Acast { id, phase: Phase::Msg, value },
            });
        }
        // The corrupt sender also equivocates echoes and readies for both
        // values toward everyone.
        for to in 1..n as u32 {
            for value in [&a, &b] {
                for phase in [Phase::Echo, Phase::Ready] {
                    pending.push(Envelope {
                        from: corrupt,
                        to: ProcessId(to),
                        msg: WireMessage::Acast { id, phase, value: value.clone() },
                    });
                }
            }
        }
        Self { n, books, corrupt, pending }
    }

    fn delivered_values(&self) -> Vec<Option<Value>> {
        let id = AcastId { sender: self.corrupt, topic: Topic::VoteInput { round: 1 } };
        self.books
            .iter()
            .map(|b| b.instance(&id).and_then(|i| i.delivered().cloned()))
            .collect()
    }
}

impl World for AcastEquivocationWorld {
    fn pending(&self) -> usize {
        self.pending.len()
    }

    fn deliver(&mut self, index: usize) {
        let env = self.pending.swap_remove(index);
        let WireMessage::Acast { id, phase, value } = env.msg else { unreachable!() };
        let book = &mut self.books[env.to.0 as usize - 1];
        let mut out = Vec::new();
        book.handle(id, env.from, phase, value, &mut out);
        // messages toward the corrupt process vanish into the adversary
        self.pending.extend(out.into_iter().filter(|e| e.to != self.corrupt));
    }

    fn check(&self) -> Result<(), String> {
        let delivered: Vec<Value> = self.delivered_values().into_iter().flatten().collect();
        if delivered.windows(2).any(|w| w[0] != w[1]) {
            return Err("two correct processes delivered different values".into());
        }
        Ok(())
    }

    fn check_terminal(&self) -> Result<(), String> {
        // all-or-nothing: in a quiescent state either every correct process
        // delivered the one value or none did
        let values = self.delivered_values();
        let delivered = values.iter().flatten().count();
        if delivered != 0 && delivered != self.n - 1 {
            return Err(format!(
                "quiescent state with {delivered} of {} correct deliveries",
                self.n - 1
            ));
        }
        Ok(())
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.books.hash(&mut h);
        let mut msgs: Vec<u64> = self
            .pending
            .iter()
            .map(|e| {
                let mut eh = DefaultHasher::new();
                e.hash(&mut eh);
                eh.finish()
            })
            .collect();
        msgs.sort_unstable();
        msgs.hash(&mut h);
        h.finish()
    }
}

/// One broadcast instance with a correct sender: deliveries must be the
/// sender's value only, and every drained schedule delivers everywhere.
#[derive(Clone)]
pub struct AcastHonestWorld {
    inner: AcastEquivocationWorld,
    value: Value,
}

impl AcastHonestWorld {
    pub fn new(n: usize, t: usize) -> Self {
        let mut inner = AcastEquivocationWorld::new(n, t);
        // rebuild the initial traffic as an honest uniform open
        let value: Value = (*b"a").as_slice().into();
        let id = AcastId { sender: inner.corrupt, topic: Topic::VoteInput { round: 1 } };
        inner.pending.clear();
        for to in 1..n as u32 {
            inner.pending.push(Envelope {
                from: inner.corrupt,
                to: ProcessId(to),
                msg: WireMessage::Acast { id, phase: Phase::Msg, value: value.clone() },
            });
        }
        Self { inner, value }
    }
}

impl World for AcastHonestWorld {
    fn pending(&self) -> usize {
        self.inner.pending()
    }

    fn deliver(&mut self, index: usize) {
        self.inner.deliver(index);
    }

    fn check(&self) -> Result<(), String> {
        for v in self.inner.delivered_values().into_iter().flatten() {
            if v != self.value {
                return Err("a correct process delivered a value the sender never sent".into());
            }
        }
        Ok(())
    }

    fn check_terminal(&self) -> Result<(), String> {
        let values = self.inner.delivered_values();
        if values.iter().any(|v| v.is_none()) {
            return Err("a drained schedule left a correct process without delivery".into());
        }
        Ok(())
    }

    fn digest(&self) -> u64 {
        self.inner.digest()
    }
}

/// A fault-free sharing instance at `n=4, t=1`: every interleaving must keep
/// all reconstruction outputs equal to the dealt secret, and every drained
/// schedule must complete at every process.
#[derive(Clone)]
pub struct IvssWorld {
    processes: Vec<ProcessState>,
    pending: Vec<Envelope>,
    n: usize,
}

impl IvssWorld {
    pub fn new(n: usize, t: usize, seed: u64) -> Self {
        let dealer = ProcessId(1);
        let field = Field::default();
        let mut processes: Vec<ProcessState> = (1..=n as u32)
            .map(|i| {
                ProcessState::new(ProcessId(i), n, t, field, ProcessMode::IvssOnly { dealer }, seed)
            })
            .collect();
        let mut pending = Vec::new();
        for p in processes.iter_mut() {
            pending.extend(p.start());
            p.take_events();
        }
        Self { processes, pending, n }
    }
}

impl World for IvssWorld {
    fn pending(&self) -> usize {
        self.pending.len()
    }

    fn deliver(&mut self, index: usize) {
        let env = self.pending.swap_remove(index);
        let target = &mut self.processes[env.to.0 as usize - 1];
        let out = target.handle(env.from, env.msg);
        target.take_events();
        self.pending.extend(out);
    }

    fn check(&self) -> Result<(), String> {
        let id = crate::msg::IvssInstanceId { dealer: ProcessId(1), round: 1, counter: 0 };
        let outputs: Vec<_> = self
            .processes
            .iter()
            .filter_map(|p| p.ivss.instance(&id).and_then(|i| i.output()))
            .collect();
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Err("correct processes reconstructed different secrets".into());
        }
        Ok(())
    }

    fn check_terminal(&self) -> Result<(), String> {
        let id = crate::msg::IvssInstanceId { dealer: ProcessId(1), round: 1, counter: 0 };
        for p in &self.processes {
            let inst = p.ivss.instance(&id).ok_or("instance missing at quiescence")?;
            if !inst.sharing_complete() {
                return Err(format!("process {} never completed the sharing", p.id()));
            }
            if inst.output().is_none() {
                return Err(format!("process {} never completed the reconstruction", p.id()));
            }
        }
        let _ = self.n;
        Ok(())
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.processes {
            p.digest(&mut h);
        }
        let mut msgs: Vec<u64> = self
            .pending
            .iter()
            .map(|e| {
                let mut eh = DefaultHasher::new();
                e.hash(&mut eh);
                eh.finish()
            })
            .collect();
        msgs.sort_unstable();
        msgs.hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equivocating_broadcast_never_splits_correct_processes() {
        let report = schedule_explore(AcastEquivocationWorld::new(4, 1), 3_000);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert!(report.explored > 100, "exploration too shallow: {}", report.explored);
    }

    #[test]
    fn sharing_instance_invariants_hold_on_explored_prefix() {
        let report = schedule_explore(IvssWorld::new(4, 1, 11), 5_000);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn honest_broadcast_has_validity_and_totality() {
        let report = schedule_explore(AcastHonestWorld::new(4, 1), 4_000);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert!(report.terminals > 0, "exploration should drain some schedules");
    }
}
