//! Coin-layer checks above the unit level: instance counts, the secret
//! sampling pipeline, and the degenerate fault-count configuration.

use std::collections::BTreeSet;

use abalab_core::field::Field;
use abalab_core::icc::coin_modulus;
use abalab_core::msg::IvssInstanceId;
use abalab_core::process::derive_rng;
use abalab_core::simnet::{run, RunConfig};
use rand::Rng;

/// Every process deals n secrets per round: 16 distinct round-1 instances
/// at n=4, all of which complete in a fault-free run.
#[test]
fn sixteen_dealer_instances_per_round_at_n4() {
    let cfg = RunConfig::aba(4, 1, vec![true, true, false, false], 8);
    let m = run(&cfg).unwrap();
    let round1: BTreeSet<IvssInstanceId> = m
        .accepted_sets
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| id.round == 1)
        .collect();
    assert_eq!(round1.len(), 16, "expected n^2 sharings in round 1: {round1:?}");
    let dealers: BTreeSet<u32> = round1.iter().map(|id| id.dealer.0).collect();
    assert_eq!(dealers, (1..=4).collect(), "every process deals");
    for dealer in 1..=4u32 {
        let counters: BTreeSet<u32> =
            round1.iter().filter(|id| id.dealer.0 == dealer).map(|id| id.counter).collect();
        assert_eq!(counters, (0..4).collect(), "one secret per assignee");
    }
}

/// Coin secrets are drawn from [0, u * floor(p/u)), so the sum of any batch
/// modulo u is exactly uniform. Frequency test over 10^4 draws of the
/// sum-then-reduce pipeline used for associated values.
#[test]
fn associated_value_pipeline_is_uniform() {
    let field = Field::default();
    let n = 4;
    let u = coin_modulus(n);
    let bound = u * (field.modulus() / u);
    let mut rng = derive_rng(0xC0FF, 3);
    let mut counts = vec![0u32; u as usize];
    let draws = 10_000;
    for _ in 0..draws {
        // t+1 = 2 summands, as in an attach set
        let sum: u128 = (0..2).map(|_| rng.gen_range(0..bound) as u128).sum();
        counts[(sum % u as u128) as usize] += 1;
    }
    let expected = draws as f64 / u as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 3 degrees of freedom: mean 3, sd ~2.45; 16 is beyond 5 sigma.
    assert!(chi2 < 16.0, "sum-mod-u pipeline is biased: chi2 = {chi2}, counts {counts:?}");
}

/// The degenerate fault-free shape: t = 0 (empty corrupt set) still runs,
/// and unanimous inputs decide in the first round.
#[test]
fn zero_fault_configuration_decides_immediately() {
    for seed in 0..5u64 {
        let cfg = RunConfig::aba(4, 0, vec![true; 4], seed);
        let m = run(&cfg).unwrap();
        assert!(m.decided, "seed {seed}");
        assert_eq!(m.output, Some(true), "seed {seed}");
        // decision fires in round 1; the driver still runs its one extra round
        assert!(m.rounds <= 2, "seed {seed}: rounds {}", m.rounds);
        assert!(m.checks.all_hold(), "seed {seed}: {:?}", m.checks);
    }
}
