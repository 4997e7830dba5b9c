//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test -p abalab-cli --test acceptance --
//! --nocapture`). Every tolerance is pinned here, in code.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use abalab_core::field::{Fe, DEFAULT_PRIME};
use abalab_core::msg::IvssInstanceId;
use abalab_core::poly::{interpolate_symmetric, row, sample_symmetric, Interpolation};
use abalab_core::process::derive_rng;
use abalab_core::simnet::explore::{schedule_explore, AcastEquivocationWorld};
use abalab_core::simnet::{AdversaryScript, RunConfig, RunMetrics};
use abalab_core::{field::Field, ProcessId};
use abalab_cli::run_batch;

fn pass(n: u32, name: &str, details: &str) {
    println!("acceptance {n} ({name}): PASS - {details}");
}

struct Failure;

impl Failure {
    fn raise(n: u32, name: &str, details: impl Into<String>) -> ! {
        let details = details.into();
        println!("acceptance {n} ({name}): FAIL - {details}");
        panic!("acceptance {n} ({name}) failed: {details}");
    }
}

fn ensure(cond: bool, n: u32, name: &str, details: impl Fn() -> String) {
    if !cond {
        Failure::raise(n, name, details());
    }
}

fn batch(configs: Vec<RunConfig>) -> Vec<RunMetrics> {
    run_batch(&configs).expect("valid configurations").runs
}

/// Criterion 1: 500 random (t, f) cases over the default prime round-trip
/// through rows and interpolation coefficient-exactly, within 5 seconds.
#[test]
fn criterion_1_interpolation_oracle_equivalence() {
    const N: u32 = 1;
    const NAME: &str = "interpolation oracle equivalence";
    let started = Instant::now();
    let field = Field::new(DEFAULT_PRIME).unwrap();
    let mut rng = derive_rng(0xACCE97, 1);
    for case in 0..500u64 {
        let t = 1 + (case % 3) as usize;
        let f = sample_symmetric(Fe(case.wrapping_mul(0x9E37) % DEFAULT_PRIME), t, field, &mut rng);
        let ids: Vec<ProcessId> =
            (0..=t as u32).map(|k| ProcessId(1 + k * (1 + (case % 5) as u32))).collect();
        let rows: BTreeMap<ProcessId, _> =
            ids.iter().map(|&i| (i, row(&f, i, field))).collect();
        match interpolate_symmetric(&rows, t, field) {
            Ok(Interpolation::Consistent(g)) => ensure(g == f, N, NAME, || {
                format!("case {case}: coefficients differ after round trip")
            }),
            other => Failure::raise(N, NAME, format!("case {case}: {other:?}")),
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), N, NAME, || format!("too slow: {elapsed:?}"));
    pass(N, NAME, &format!("500 round trips exact in {elapsed:?}"));
}

/// Criterion 2: exhaustive schedule exploration of one equivocating
/// broadcast at n=4, t=1 finds no execution in which two correct processes
/// deliver different values, within 10^4 branches and 60 seconds.
#[test]
fn criterion_2_acast_safety_exhaustive() {
    const N: u32 = 2;
    const NAME: &str = "broadcast safety under equivocation, exhaustively";
    let started = Instant::now();
    let report = schedule_explore(AcastEquivocationWorld::new(4, 1), 10_000);
    let elapsed = started.elapsed();
    ensure(report.violations.is_empty(), N, NAME, || format!("{:?}", report.violations));
    ensure(elapsed < Duration::from_secs(60), N, NAME, || format!("too slow: {elapsed:?}"));
    pass(
        N,
        NAME,
        &format!(
            "{} states explored, {} quiescent, zero divergences in {elapsed:?}",
            report.explored, report.terminals
        ),
    );
}

/// Criterion 3: fault-free sharing at (4,1) and (7,2), 200 seeds each —
/// every correct process completes both phases and outputs the dealt
/// secret; no pair is ever inferred.
#[test]
fn criterion_3_ivss_honest_path() {
    const N: u32 = 3;
    const NAME: &str = "sharing honest path";
    for (n, t) in [(4usize, 1usize), (7, 2)] {
        let configs: Vec<RunConfig> =
            (0..200u64).map(|seed| RunConfig::ivss_only(n, t, ProcessId(1), seed)).collect();
        for m in batch(configs) {
            let seed = m.seed;
            let report = m.ivss_only.as_ref().expect("sharing-only run");
            let defined = report.defined_secret;
            ensure(defined.is_some(), N, NAME, || format!("n={n} seed={seed}: no defined secret"));
            for (p, completed, output) in &report.per_process {
                ensure(*completed, N, NAME, || {
                    format!("n={n} seed={seed}: process {p} did not complete the sharing")
                });
                ensure(*output == defined, N, NAME, || {
                    format!("n={n} seed={seed}: process {p} output {output:?} != {defined:?}")
                });
            }
            ensure(m.fp_pairs == 0, N, NAME, || {
                format!("n={n} seed={seed}: {} inferred pairs in a fault-free run", m.fp_pairs)
            });
            ensure(m.checks.all_hold(), N, NAME, || {
                format!("n={n} seed={seed}: {:?}", m.checks)
            });
        }
    }
    pass(N, NAME, "400 fault-free sharings reconstructed the dealt secret with empty FP sets");
}

/// Criterion 4: the scripted equivocating dealer at n=4, t=1 makes one
/// correct process output the second polynomial's secret; afterwards every
/// correct process infers the pair {dealer, excluded-row peer}, and no
/// later-round verified candidate set contains that pair.
#[test]
fn criterion_4_divergence_event_scenario() {
    const N: u32 = 4;
    const NAME: &str = "divergence event scenario";
    let dealer = ProcessId(4);
    let victim = ProcessId(3);
    let pair = (ProcessId(2), ProcessId(4));
    let attacked = IvssInstanceId { dealer, round: 1, counter: 0 };
    let cfg = RunConfig::aba(4, 1, vec![false, false, true, true], 2)
        .with_adversary(AdversaryScript::EquivocatingDealer { dealer, victim });
    let m = abalab_core::simnet::run(&cfg).unwrap();
    ensure(m.decided, N, NAME, || "run did not decide".into());
    ensure(m.e_rounds >= 1, N, NAME, || "the divergence event did not fire".into());
    let field = Field::new(cfg.prime).unwrap();
    let div = m
        .divergences
        .iter()
        .find(|d| d.instance == attacked)
        .unwrap_or_else(|| Failure::raise(N, NAME, "no divergence on the attacked instance"));
    ensure(div.got == field.add(div.defined, Fe(1)), N, NAME, || {
        format!("divergent output {} is not the attack polynomial's secret", div.got)
    });
    // the forced candidate set
    let m_attacked: Vec<_> = m
        .accepted_sets
        .iter()
        .filter(|(id, _)| *id == attacked)
        .map(|(_, members)| members.clone())
        .collect();
    ensure(!m_attacked.is_empty(), N, NAME, || "attacked instance never accepted".into());
    for members in &m_attacked {
        ensure(members == &vec![ProcessId(1), ProcessId(2), ProcessId(4)], N, NAME, || {
            format!("candidate set {members:?} was not forced to {{1,2,dealer}}")
        });
    }
    // every correct process inferred the pair; at least t(n-3t) = 1 pairs
    for (p, fp) in &m.fp_by_process {
        ensure(fp.contains(&pair), N, NAME, || {
            format!("process {p} did not infer {pair:?}: {fp:?}")
        });
        ensure(!fp.is_empty(), N, NAME, || format!("process {p} inferred no pairs"));
    }
    // exclusion from all later verified candidate sets, non-vacuously
    let later: Vec<_> = m.accepted_sets.iter().filter(|(id, _)| id.round > 1).collect();
    ensure(!later.is_empty(), N, NAME, || "no later-round candidate sets to check".into());
    for (id, members) in &later {
        ensure(
            !(members.contains(&pair.0) && members.contains(&pair.1)),
            N,
            NAME,
            || format!("barred pair inside round-{} set {members:?}", id.round),
        );
    }
    pass(
        N,
        NAME,
        &format!(
            "victim output defined+1, all correct FP sets contain {pair:?}, {} later sets exclude it",
            later.len()
        ),
    );
}

/// Criterion 5: at n=5, t=1 the divergence event is impossible — zero
/// occurrences across 500 seeds spanning every built-in adversary script.
#[test]
fn criterion_5_no_divergence_at_n5() {
    const N: u32 = 5;
    const NAME: &str = "divergence impossible at n=5";
    let n = 5;
    let fairness = abalab_core::simnet::default_fairness(n);
    let scripts: Vec<AdversaryScript> = ["delay", "reorder", "silent", "wrong_point", "equivocating_dealer"]
        .iter()
        .map(|name| AdversaryScript::by_name(name, n, fairness).expect("known name"))
        .collect();
    let mut configs = Vec::new();
    for script in &scripts {
        for seed in 0..100u64 {
            configs.push(
                RunConfig::aba(n, 1, vec![true, false, true, false, true], seed)
                    .with_adversary(*script),
            );
        }
    }
    let runs = batch(configs);
    for m in &runs {
        ensure(m.e_rounds == 0, N, NAME, || {
            format!("seed {}: divergence fired {} times", m.seed, m.e_rounds)
        });
        ensure(m.checks.all_hold(), N, NAME, || format!("seed {}: {:?}", m.seed, m.checks));
    }
    pass(N, NAME, &format!("{} adversarial runs, zero divergence events", runs.len()));
}

/// Criterion 6: fault-free coin bias at n=4, t=1 over 2000 seeds — each
/// value is the unanimous first-round coin in at least 15% of runs, within
/// 10 minutes. The run also checks the estimate-agreement frequency the
/// coin is supposed to produce.
#[test]
fn criterion_6_coin_bias() {
    const N: u32 = 6;
    const NAME: &str = "coin bias";
    let started = Instant::now();
    let configs: Vec<RunConfig> =
        (0..2000u64).map(|seed| RunConfig::aba(4, 1, vec![true, false, false, true], seed)).collect();
    let runs = batch(configs);
    let trials = runs.len() as f64;
    let mut zero = 0u64;
    let mut one = 0u64;
    for m in &runs {
        match m.coin_rounds.get(&1) {
            Some(Some(false)) => zero += 1,
            Some(Some(true)) => one += 1,
            _ => {}
        }
        ensure(m.decided && m.checks.all_hold(), N, NAME, || {
            format!("seed {}: decided={} checks={:?}", m.seed, m.decided, m.checks)
        });
    }
    let elapsed = started.elapsed();
    let f0 = zero as f64 / trials;
    let f1 = one as f64 / trials;
    ensure(f0 >= 0.15, N, NAME, || format!("coin value 0 frequency {f0:.3} below 0.15"));
    ensure(f1 >= 0.15, N, NAME, || format!("coin value 1 frequency {f1:.3} below 0.15"));
    // estimate agreement per concluded round: guaranteed with probability
    // >= 1/4 per round, estimated well above 0.2 in fault-free runs
    let (mut agree, mut total) = (0u64, 0u64);
    for m in &runs {
        for ok in m.estimate_rounds.values() {
            total += 1;
            agree += *ok as u64;
        }
    }
    let agree_rate = agree as f64 / total as f64;
    ensure(agree_rate >= 0.2, N, NAME, || {
        format!("estimate agreement rate {agree_rate:.3} below 0.2")
    });
    // expected fault-free rounds stay tiny; 8 is a generous ceiling
    let mean_rounds = runs.iter().map(|m| m.rounds as f64).sum::<f64>() / trials;
    ensure(mean_rounds <= 8.0, N, NAME, || format!("mean rounds {mean_rounds:.2} above 8"));
    ensure(elapsed < Duration::from_secs(600), N, NAME, || format!("too slow: {elapsed:?}"));
    pass(
        N,
        NAME,
        &format!(
            "coin frequencies {f0:.3}/{f1:.3}, estimate agreement {agree_rate:.3}, \
             mean rounds {mean_rounds:.2}, {elapsed:?}"
        ),
    );
}

/// Criterion 7: validity and agreement at n in {4, 7} across every built-in
/// adversary script and unanimous/mixed input patterns, with decision rate
/// 1.0 inside the step budget.
#[test]
fn criterion_7_validity_and_agreement() {
    const N: u32 = 7;
    const NAME: &str = "agreement validity";
    let mut total = 0usize;
    for (n, t) in [(4usize, 1usize), (7, 2)] {
        let fairness = abalab_core::simnet::default_fairness(n);
        let scripts: Vec<AdversaryScript> = AdversaryScript::NAMED
            .iter()
            .map(|name| AdversaryScript::by_name(name, n, fairness).expect("known name"))
            .collect();
        let mixed: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let patterns: [(&str, Vec<bool>); 3] = [
            ("all zeros", vec![false; n]),
            ("all ones", vec![true; n]),
            ("mixed", mixed),
        ];
        for script in &scripts {
            for (label, inputs) in &patterns {
                let configs: Vec<RunConfig> = (0..28u64)
                    .map(|seed| {
                        RunConfig::aba(n, t, inputs.clone(), seed).with_adversary(*script)
                    })
                    .collect();
                let runs = batch(configs);
                total += runs.len();
                let corrupt: Vec<ProcessId> = match script {
                    AdversaryScript::Silent { target }
                    | AdversaryScript::WrongPoint { target } => vec![*target],
                    AdversaryScript::EquivocatingDealer { dealer, .. } => vec![*dealer],
                    _ => vec![],
                };
                let correct_inputs: Vec<bool> = inputs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !corrupt.contains(&ProcessId(*i as u32 + 1)))
                    .map(|(_, &b)| b)
                    .collect();
                let unanimous = correct_inputs.windows(2).all(|w| w[0] == w[1]);
                for m in &runs {
                    ensure(m.decided, N, NAME, || {
                        format!("n={n} {} {label} seed {}: no decision", script.name(), m.seed)
                    });
                    ensure(m.checks.all_hold(), N, NAME, || {
                        format!(
                            "n={n} {} {label} seed {}: {:?}",
                            script.name(),
                            m.seed,
                            m.checks
                        )
                    });
                    if unanimous {
                        ensure(m.output == Some(correct_inputs[0]), N, NAME, || {
                            format!(
                                "n={n} {} {label} seed {}: output {:?} breaks validity",
                                script.name(),
                                m.seed,
                                m.output
                            )
                        });
                    } else {
                        ensure(m.output.is_some(), N, NAME, || {
                            format!("n={n} {} {label} seed {}: deciders disagreed", script.name(), m.seed)
                        });
                    }
                }
            }
        }
    }
    pass(N, NAME, &format!("{total} runs decided with validity and agreement intact"));
}

/// Criterion 8: adversarial expected rounds at n=4, t=1 (delta = 1) over
/// 1000 trials — sample mean at most 3t/delta + 17 = 20 rounds, and every
/// run stays within the 3t/delta + 1 = 4 divergence-round budget.
#[test]
fn criterion_8_expected_rounds() {
    const N: u32 = 8;
    const NAME: &str = "expected rounds under adversaries";
    let n = 4;
    let fairness = abalab_core::simnet::default_fairness(n);
    let scripts: Vec<AdversaryScript> = ["delay", "reorder", "silent", "wrong_point", "equivocating_dealer"]
        .iter()
        .map(|name| AdversaryScript::by_name(name, n, fairness).expect("known name"))
        .collect();
    let mut configs = Vec::new();
    for script in &scripts {
        for seed in 0..200u64 {
            configs.push(
                RunConfig::aba(n, 1, vec![false, true, true, false], seed).with_adversary(*script),
            );
        }
    }
    let runs = batch(configs);
    let mut rounds_sum = 0u64;
    for m in &runs {
        ensure(m.decided, N, NAME, || format!("seed {}: no decision", m.seed));
        ensure(m.e_rounds <= 4, N, NAME, || {
            format!("seed {}: {} divergence rounds exceed the budget of 4", m.seed, m.e_rounds)
        });
        rounds_sum += m.rounds as u64;
    }
    let mean = rounds_sum as f64 / runs.len() as f64;
    ensure(mean <= 20.0, N, NAME, || format!("mean rounds {mean:.2} above 20"));
    pass(N, NAME, &format!("{} adversarial runs, mean rounds {mean:.2} <= 20", runs.len()));
}

/// Criterion 9: three named seeds reproduce the committed CSV rows byte for
/// byte.
#[test]
fn criterion_9_determinism_regression() {
    const N: u32 = 9;
    const NAME: &str = "determinism regression";
    let scenario: abalab_cli::Scenario = toml::from_str(
        r#"
            n = 4
            t = 1
            inputs = "0011"
            seeds = { list = [101, 202, 303] }
        "#,
    )
    .expect("fixture scenario parses");
    let outcome = run_batch(&scenario.run_configs().expect("valid")).expect("runs");
    let text = abalab_cli::report::csv_text(&outcome.runs);
    let golden = include_str!("golden/regression.csv");
    ensure(text == golden, N, NAME, || {
        format!("CSV drifted from the golden fixture:\n--- got ---\n{text}\n--- want ---\n{golden}")
    });
    pass(N, NAME, "three named seeds match the golden rows byte for byte");
}
