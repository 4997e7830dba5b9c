//! Deterministic discrete-event network: private channels with arbitrary
//! finite delays under a programmable adversary and a fairness bound.
//!
//! A run is a pure function of `(config, adversary script, seed)`: the
//! scheduler, the per-process generators, and the adversary all derive from
//! the root seed, and every container iterates in a fixed order.

pub mod adversary;
pub mod explore;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use serde::Serialize;
use thiserror::Error;

use crate::field::{Fe, Field};
use crate::msg::{Envelope, IvssInstanceId, WireMessage};
use crate::process::{derive_rng, ProcessMode, ProcessState};
use crate::{Pair, ProcessId, Round};

pub use adversary::{Adversary, AdversaryScript, MessageMeta, MetaKind, Placement};
pub use oracle::{Divergence, Oracle};

/// What protocol a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum RunMode {
    /// Full agreement over the input bits.
    Aba,
    /// One sharing plus reconstruction dealt by `dealer`.
    IvssOnly { dealer: ProcessId },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub t: usize,
    pub prime: u64,
    pub fairness: u64,
    pub max_steps: u64,
    pub mode: RunMode,
    pub inputs: Vec<bool>,
    pub adversary: AdversaryScript,
    pub seed: u64,
}

impl RunConfig {
    /// Fault-free agreement run with library defaults.
    pub fn aba(n: usize, t: usize, inputs: Vec<bool>, seed: u64) -> Self {
        Self {
            n,
            t,
            prime: crate::field::DEFAULT_PRIME,
            fairness: default_fairness(n),
            max_steps: 1_000_000,
            mode: RunMode::Aba,
            inputs,
            adversary: AdversaryScript::None,
            seed,
        }
    }

    pub fn ivss_only(n: usize, t: usize, dealer: ProcessId, seed: u64) -> Self {
        Self {
            n,
            t,
            prime: crate::field::DEFAULT_PRIME,
            fairness: default_fairness(n),
            max_steps: 1_000_000,
            mode: RunMode::IvssOnly { dealer },
            inputs: Vec::new(),
            adversary: AdversaryScript::None,
            seed,
        }
    }

    pub fn with_adversary(mut self, adversary: AdversaryScript) -> Self {
        self.adversary = adversary;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Default fairness bound: generous enough for adversarial reordering,
/// small enough to terminate promptly.
pub fn default_fairness(n: usize) -> u64 {
    64 * (n * n) as u64
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("resilience requires n > 3t (got n={n}, t={t})")]
    Resilience { n: usize, t: usize },
    #[error("at least 4 processes required, got {0}")]
    TooFewProcesses(usize),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {p} must exceed max(n, ceil(0.87 n)) = {need}")]
    PrimeTooSmall { p: u64, need: u64 },
    #[error("inputs must list one bit per process (need {need}, got {got})")]
    BadInputs { need: usize, got: usize },
    #[error("fairness bound must be positive")]
    ZeroFairness,
    #[error("dealer {0} out of range")]
    BadDealer(ProcessId),
    #[error(transparent)]
    Script(#[from] adversary::ScriptError),
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The event queue drained.
    Drained,
    /// The step budget ran out first; reported distinctly from protocol
    /// failures.
    MaxSteps,
}

/// Per-run assertion outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunChecks {
    /// All correct deciders agree.
    pub agreement: bool,
    /// No correct FP set names two correct processes.
    pub fp_sanity: bool,
    /// Divergence rounds within the 3t/delta + 1 budget.
    pub e_budget: bool,
    /// Coin core set is at least n/3 and contained in every accepted H.
    pub coin_core: bool,
    /// No grade-2 output coexists with a graded output for the other value.
    pub grade_soundness: bool,
    /// Correct processes agree on every associated value outside
    /// divergence rounds.
    pub value_fixation: bool,
    /// Every delivery happened within the fairness bound.
    pub fairness: bool,
}

impl RunChecks {
    pub fn all_hold(&self) -> bool {
        self.agreement
            && self.fp_sanity
            && self.e_budget
            && self.coin_core
            && self.grade_soundness
            && self.value_fixation
            && self.fairness
    }
}

/// Sharing-only run report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IvssOnlyReport {
    pub defined_secret: Option<Fe>,
    /// Per correct process: sharing completed, reconstruction output.
    pub per_process: Vec<(ProcessId, bool, Option<Fe>)>,
}

/// Everything a run reports. Identical `(config, seed)` produce identical
/// metrics, bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub decided: bool,
    pub output: Option<bool>,
    /// Highest round any correct process entered.
    pub rounds: Round,
    /// Total ticks divided by the longest delivery delay.
    pub duration: f64,
    pub msgs_total: u64,
    pub msgs_acast: u64,
    /// Number of rounds containing a divergence event.
    pub e_rounds: u32,
    /// Distinct inferred pairs across correct processes.
    pub fp_pairs: u32,
    pub termination: Termination,
    pub checks: RunChecks,
    /// Unanimous coin value per round, when all correct outputs agree.
    pub coin_rounds: BTreeMap<Round, Option<bool>>,
    /// Rounds whose concluded estimates agree across correct processes.
    pub estimate_rounds: BTreeMap<Round, bool>,
    /// Vote outputs of correct processes: round -> (process, value, grade).
    pub vote_outputs: BTreeMap<Round, Vec<(ProcessId, Option<bool>, u8)>>,
    pub divergences: Vec<Divergence>,
    /// Candidate sets that passed full verification at correct processes.
    pub accepted_sets: Vec<(IvssInstanceId, Vec<ProcessId>)>,
    pub fp_union: Vec<Pair>,
    /// Each correct process's full inferred-pair set.
    pub fp_by_process: Vec<(ProcessId, Vec<Pair>)>,
    pub ivss_only: Option<IvssOnlyReport>,
}

impl RunMetrics {
    /// The fixed CSV row: seed, decided, output, rounds, duration,
    /// msgs_total, msgs_acast, e_rounds, fp_pairs.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{},{},{},{}",
            self.seed,
            self.decided,
            self.output.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default(),
            self.rounds,
            self.duration,
            self.msgs_total,
            self.msgs_acast,
            self.e_rounds,
            self.fp_pairs,
        )
    }

    pub const CSV_HEADER: &'static str =
        "seed,decided,output,rounds,duration,msgs_total,msgs_acast,e_rounds,fp_pairs";
}

struct Pending {
    env: Envelope,
    /// Tick stamp (one tick per delivery), for the delay and duration
    /// metrics.
    enq_tick: u64,
    /// Fairness-clock stamp: policy steps, which do not advance during
    /// forced catch-up deliveries. This makes "delivered within F steps of
    /// eligibility" a hard guarantee even when many messages share a
    /// deadline.
    enq_step: u64,
}

/// The deterministic scheduler.
struct Scheduler {
    slots: Vec<Option<Pending>>,
    /// Deliverable now.
    free: Vec<usize>,
    /// Held until a tick count.
    timed: BTreeMap<(u64, usize), usize>,
    /// Held until an adversary flag fires.
    flagged: BTreeMap<u32, Vec<usize>>,
    /// Enqueue order, for the fairness override.
    fifo: VecDeque<usize>,
    ticks: u64,
    steps: u64,
    live: usize,
    max_delay: u64,
    max_wait_steps: u64,
    fairness: u64,
}

impl Scheduler {
    fn new(fairness: u64) -> Self {
        Self {
            slots: Vec::new(),
            free: Vec::new(),
            timed: BTreeMap::new(),
            flagged: BTreeMap::new(),
            fifo: VecDeque::new(),
            ticks: 0,
            steps: 0,
            live: 0,
            max_delay: 0,
            max_wait_steps: 0,
            fairness,
        }
    }

    fn enqueue(&mut self, env: Envelope, placement: Placement) {
        let slot = self.slots.len();
        self.slots.push(Some(Pending { env, enq_tick: self.ticks, enq_step: self.steps }));
        self.fifo.push_back(slot);
        self.live += 1;
        match placement {
            Placement::Free => self.free.push(slot),
            Placement::Until(tick) => {
                self.timed.insert((tick, slot), slot);
            }
            Placement::Flag(f) => self.flagged.entry(f).or_default().push(slot),
        }
    }

    fn release_flag(&mut self, flag: u32) {
        if let Some(slots) = self.flagged.remove(&flag) {
            self.free.extend(slots);
        }
    }

    fn release_timed(&mut self) {
        while let Some((&(tick, _), &slot)) = self.timed.iter().next() {
            if tick > self.ticks {
                break;
            }
            self.timed.pop_first();
            self.free.push(slot);
        }
    }

    /// Picks and removes the next delivery: the fairness override first
    /// (without advancing the fairness clock), then the adversary policy.
    fn pick(&mut self, newest_first: bool, rng: &mut ChaCha8Rng) -> Option<Pending> {
        if self.live == 0 {
            return None;
        }
        self.release_timed();
        // fairness: the oldest pending message must not wait beyond F steps
        while let Some(&front) = self.fifo.front() {
            match &self.slots[front] {
                None => {
                    self.fifo.pop_front();
                }
                Some(p) => {
                    if self.steps.saturating_sub(p.enq_step) >= self.fairness {
                        return self.deliver(front, false);
                    }
                    break;
                }
            }
        }
        // policy over the free pool
        if newest_first {
            while let Some(&slot) = self.free.last() {
                if self.slots[slot].is_some() {
                    self.free.pop();
                    return self.deliver(slot, true);
                }
                self.free.pop();
            }
        } else {
            while !self.free.is_empty() {
                let i = rng.gen_range(0..self.free.len());
                let slot = self.free.swap_remove(i);
                if self.slots[slot].is_some() {
                    return self.deliver(slot, true);
                }
            }
        }
        // nothing free: deliver the earliest timed hold, else any flagged
        if let Some(((_, _), slot)) = self.timed.pop_first() {
            return self.deliver(slot, true);
        }
        loop {
            let Some((&flag, _)) = self.flagged.iter().next() else { break };
            let slots = self.flagged.get_mut(&flag).expect("key exists");
            while let Some(slot) = slots.pop() {
                if self.slots[slot].is_some() {
                    return self.deliver(slot, true);
                }
            }
            self.flagged.remove(&flag);
        }
        None
    }

    fn deliver(&mut self, slot: usize, policy_step: bool) -> Option<Pending> {
        let pending = self.slots[slot].take().expect("live slot");
        self.live -= 1;
        self.ticks += 1;
        if policy_step {
            self.steps += 1;
        }
        self.max_delay = self.max_delay.max(self.ticks - pending.enq_tick);
        self.max_wait_steps = self.max_wait_steps.max(self.steps - pending.enq_step);
        Some(pending)
    }
}

/// Drives one run to quiescence or the step budget.
pub fn run(config: &RunConfig) -> Result<RunMetrics, ConfigError> {
    let n = config.n;
    let t = config.t;
    if n < 4 {
        return Err(ConfigError::TooFewProcesses(n));
    }
    if n <= 3 * t {
        return Err(ConfigError::Resilience { n, t });
    }
    let field = Field::new(config.prime).ok_or(ConfigError::NotPrime(config.prime))?;
    let need = (n as u64).max(crate::icc::coin_modulus(n));
    if config.prime <= need {
        return Err(ConfigError::PrimeTooSmall { p: config.prime, need });
    }
    if config.fairness == 0 {
        return Err(ConfigError::ZeroFairness);
    }
    let mut adversary = Adversary::new(config.adversary, n, t, config.fairness)?;
    let corrupt = adversary.corrupt().clone();

    let modes: Vec<ProcessMode> = match config.mode {
        RunMode::Aba => {
            if config.inputs.len() != n {
                return Err(ConfigError::BadInputs { need: n, got: config.inputs.len() });
            }
            config.inputs.iter().map(|&b| ProcessMode::Aba { input: b }).collect()
        }
        RunMode::IvssOnly { dealer } => {
            if dealer.0 == 0 || dealer.0 > n as u32 {
                return Err(ConfigError::BadDealer(dealer));
            }
            (0..n).map(|_| ProcessMode::IvssOnly { dealer }).collect()
        }
    };

    let mut processes: Vec<ProcessState> = (1..=n as u32)
        .map(|i| ProcessState::new(ProcessId(i), n, t, field, modes[i as usize - 1], config.seed))
        .collect();
    let mut oracle = Oracle::new(n, t, corrupt.clone());
    let mut sched = Scheduler::new(config.fairness);
    let mut sched_rng = derive_rng(config.seed, 0);

    let mut msgs_total = 0u64;
    let mut msgs_acast = 0u64;

    // start everyone, routing initial traffic through the adversary
    let mut boot = Vec::new();
    for p in processes.iter_mut() {
        let outs = p.start();
        boot.push((p.id(), outs));
    }
    for (pid, outs) in boot {
        for env in outs {
            enqueue_transformed(env, &mut adversary, &corrupt, field, &mut sched);
        }
        let _ = pid;
    }
    for p in processes.iter_mut() {
        let pid = p.id();
        for ev in p.take_events() {
            oracle.on_event(pid, ev);
        }
    }

    let mut termination = Termination::Drained;
    loop {
        if sched.ticks >= config.max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        let Some(pending) = sched.pick(adversary.newest_first(), &mut sched_rng) else {
            break;
        };
        msgs_total += 1;
        let env = pending.env;
        if matches!(env.msg, WireMessage::Acast { .. }) {
            msgs_acast += 1;
        }
        if let WireMessage::Row { id, ref coeffs } = env.msg {
            if env.from == id.dealer {
                oracle.on_row_delivered(id, env.to, coeffs);
            }
        }
        let target = &mut processes[env.to.0 as usize - 1];
        let outs = target.handle(env.from, env.msg);
        let pid = target.id();
        for ev in target.take_events() {
            oracle.on_event(pid, ev);
        }
        for out in outs {
            enqueue_transformed(out, &mut adversary, &corrupt, field, &mut sched);
        }
    }

    // assemble metrics
    let divergences = oracle.divergences(field);
    let e_round_set = oracle.event_rounds(field);
    let delta = (n - 3 * t) as f64;
    let budget = 3.0 * t as f64 / delta + 1.0;
    let mut fp_union: BTreeSet<Pair> = BTreeSet::new();
    let mut fp_by_process = Vec::new();
    let mut fp_sanity = true;
    for p in &processes {
        if corrupt.contains(&p.id()) {
            continue;
        }
        let fp = p.ivss.fp();
        fp_sanity &= oracle.fp_pairs_sane(fp);
        fp_union.extend(fp.iter().copied());
        fp_by_process.push((p.id(), fp.iter().copied().collect()));
    }
    let correct_count = n - corrupt.len();
    let decided = oracle.decided.len() == correct_count && matches!(config.mode, RunMode::Aba);
    let output = if oracle.agreement_holds() {
        oracle.decided.values().next().copied()
    } else {
        None
    };
    let ivss_only = match config.mode {
        RunMode::IvssOnly { dealer } => {
            let id = IvssInstanceId { dealer, round: 1, counter: 0 };
            let outputs = oracle.instance_outputs(&id);
            let per_process = processes
                .iter()
                .filter(|p| !corrupt.contains(&p.id()))
                .map(|p| {
                    let complete = p
                        .ivss
                        .instance(&id)
                        .map(|i| i.sharing_complete())
                        .unwrap_or(false);
                    (p.id(), complete, outputs.get(&p.id()).copied())
                })
                .collect();
            Some(IvssOnlyReport { defined_secret: oracle.defined_secret(&id, field), per_process })
        }
        RunMode::Aba => None,
    };
    let checks = RunChecks {
        agreement: oracle.agreement_holds(),
        fp_sanity,
        e_budget: (e_round_set.len() as f64) <= budget,
        coin_core: oracle.coin_core_holds(),
        grade_soundness: oracle.grade_soundness_holds(),
        value_fixation: oracle.value_fixation_holds(&e_round_set),
        fairness: sched.max_wait_steps <= sched.fairness,
    };
    Ok(RunMetrics {
        seed: config.seed,
        decided,
        output,
        rounds: oracle.max_round,
        duration: sched.ticks as f64 / sched.max_delay.max(1) as f64,
        msgs_total,
        msgs_acast,
        e_rounds: e_round_set.len() as u32,
        fp_pairs: fp_union.len() as u32,
        termination,
        checks,
        coin_rounds: oracle.coin_rounds(),
        estimate_rounds: oracle.estimate_rounds(),
        vote_outputs: oracle.vote_outputs(),
        divergences,
        accepted_sets: oracle.accepted_sets.clone(),
        fp_union: fp_union.into_iter().collect(),
        fp_by_process,
        ivss_only,
    })
}

fn enqueue_transformed(
    env: Envelope,
    adversary: &mut Adversary,
    corrupt: &BTreeSet<ProcessId>,
    field: Field,
    sched: &mut Scheduler,
) {
    let outs = if corrupt.contains(&env.from) {
        let from = env.from;
        let outs = adversary.transform(env, field);
        // private channels cannot be forged: rewritten traffic keeps its
        // corrupt originator
        debug_assert!(outs.iter().all(|e| e.from == from));
        outs
    } else {
        vec![env]
    };
    for env in outs {
        let meta = MessageMeta::of(&env);
        if let Some(flag) = adversary.observe_send(&meta) {
            sched.release_flag(flag);
        }
        let placement = adversary.placement(&meta, sched.ticks);
        sched.enqueue(env, placement);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = RunConfig::aba(4, 1, vec![true; 4], 0);
        cfg.n = 3;
        assert!(matches!(run(&cfg), Err(ConfigError::TooFewProcesses(3))));
        let cfg = RunConfig::aba(6, 2, vec![true; 6], 0);
        assert!(matches!(run(&cfg), Err(ConfigError::Resilience { .. })));
        let mut cfg = RunConfig::aba(4, 1, vec![true; 4], 0);
        cfg.prime = 10;
        assert!(matches!(run(&cfg), Err(ConfigError::NotPrime(10))));
        let mut cfg = RunConfig::aba(4, 1, vec![true; 4], 0);
        cfg.prime = 3;
        assert!(matches!(run(&cfg), Err(ConfigError::PrimeTooSmall { .. })));
        let cfg = RunConfig::aba(4, 1, vec![true; 3], 0);
        assert!(matches!(run(&cfg), Err(ConfigError::BadInputs { need: 4, got: 3 })));
    }

    #[test]
    fn max_steps_reports_nontermination_distinctly() {
        let mut cfg = RunConfig::aba(4, 1, vec![true; 4], 7);
        cfg.max_steps = 50;
        let m = run(&cfg).unwrap();
        assert_eq!(m.termination, Termination::MaxSteps);
        assert!(!m.decided);
    }
}
