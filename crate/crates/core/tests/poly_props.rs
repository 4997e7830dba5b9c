//! Property tests for the polynomial layer: interpolation round trips,
//! seed-subset independence, row symmetry, and the row-agreement bound
//! between distinct polynomials.

use std::collections::{BTreeMap, BTreeSet};

use abalab_core::field::{Fe, Field};
use abalab_core::poly::{
    check_interpolation_set, interpolate_symmetric, row, sample_symmetric, Interpolation,
};
use abalab_core::ProcessId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field() -> Field {
    Field::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any >= t+1 of a polynomial's rows recover it exactly, no matter which
    /// ids are used.
    #[test]
    fn round_trip_from_any_row_subset(
        seed in 0u64..1_000_000,
        t in 1usize..=3,
        secret in 0u64..1_000_000,
        extra in 0usize..=2,
    ) {
        let f = sample_symmetric(Fe(secret), t, field(), &mut ChaCha8Rng::seed_from_u64(seed));
        // skewed, non-contiguous ids
        let ids: Vec<ProcessId> = (0..t + 1 + extra).map(|k| ProcessId((2 * k + 1) as u32)).collect();
        let rows: BTreeMap<ProcessId, _> =
            ids.iter().map(|&i| (i, row(&f, i, field()))).collect();
        match interpolate_symmetric(&rows, t, field()).unwrap() {
            Interpolation::Consistent(g) => prop_assert_eq!(g, f),
            other => return Err(TestCaseError::fail(format!("unexpected {other:?}"))),
        }
    }

    /// The interpolation is independent of which size-(t+1) subset seeds the
    /// construction: every qualifying subset yields the same coefficients.
    #[test]
    fn seed_subset_independence(seed in 0u64..1_000_000, t in 1usize..=2) {
        let f = sample_symmetric(Fe(42), t, field(), &mut ChaCha8Rng::seed_from_u64(seed));
        let n = t + 3;
        let all: Vec<ProcessId> = (1..=n as u32).map(ProcessId).collect();
        let rows: BTreeMap<ProcessId, _> =
            all.iter().map(|&i| (i, row(&f, i, field()))).collect();
        let witness: BTreeSet<ProcessId> = all.iter().copied().collect();
        let mut results = Vec::new();
        for skip in 0..all.len() {
            let subset: BTreeSet<ProcessId> = all
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != skip)
                .map(|(_, &p)| p)
                .take(t + 1)
                .collect();
            let g = check_interpolation_set(&rows, &subset, &witness, t, t + 1, field())
                .unwrap()
                .expect("honest rows verify");
            results.push(g);
        }
        for g in &results {
            prop_assert_eq!(g, &f);
        }
    }

    /// f(i,j) = f(j,i) through the row API.
    #[test]
    fn rows_are_symmetric(seed in 0u64..1_000_000, t in 0usize..=3) {
        let f = sample_symmetric(Fe(7), t, field(), &mut ChaCha8Rng::seed_from_u64(seed));
        for i in 1..=6u32 {
            for j in 1..=6u32 {
                let ri = row(&f, ProcessId(i), field());
                let rj = row(&f, ProcessId(j), field());
                prop_assert_eq!(
                    ri.eval(ProcessId(j).point(), field()),
                    rj.eval(ProcessId(i).point(), field())
                );
            }
        }
    }

    /// Two distinct symmetric degree-t polynomials agree on at most t full
    /// rows, so distinct interpolation sets intersect in at most t ids.
    /// The sharpest case is built directly: g = f + c D(x) D(y) with
    /// D = prod_{k in S}(x - k) shares exactly the rows in S.
    #[test]
    fn distinct_polynomials_share_at_most_t_rows(
        seed in 0u64..1_000_000,
        t in 1usize..=3,
        share_count in 0usize..=3,
        c in 1u64..1_000_000,
    ) {
        let share_count = share_count.min(t);
        let fld = field();
        let f = sample_symmetric(Fe(5), t, fld, &mut ChaCha8Rng::seed_from_u64(seed));
        let shared_ids: Vec<u32> = (1..=share_count as u32).collect();
        // D(x) = prod (x - k), low-to-high coefficients, padded to t+1
        let mut d = vec![fld.one()];
        for &k in &shared_ids {
            let kp = ProcessId(k).point();
            let mut next = vec![Fe(0); d.len() + 1];
            for (deg, &coeff) in d.iter().enumerate() {
                next[deg + 1] = fld.add(next[deg + 1], coeff);
                next[deg] = fld.sub(next[deg], fld.mul(coeff, kp));
            }
            d = next;
        }
        d.resize(t + 1, Fe(0));
        let mut coeffs = Vec::with_capacity((t + 1) * (t + 1));
        for a in 0..=t {
            for b in 0..=t {
                let delta = fld.mul(Fe(c), fld.mul(d[a], d[b]));
                coeffs.push(fld.add(f.coeff(a, b), delta));
            }
        }
        let g = abalab_core::poly::SymBivarPoly::from_coeffs(t, coeffs).expect("symmetric");
        prop_assert!(g != f);
        let shared = (1..=30u32)
            .filter(|&i| row(&f, ProcessId(i), fld) == row(&g, ProcessId(i), fld))
            .count();
        prop_assert_eq!(shared, share_count);
        prop_assert!(shared <= t);
    }
}

/// Interpolation-set geometry on the canonical divergence fixture: with
/// rows {1: f_1, 2: f_2, d: g_d} for g = f + (1-x)(1-y), the maximal
/// interpolation sets are exactly {1,2} and {1,d}; they intersect in at
/// most t ids and the smallest has n-2t <= |S0| <= n/2 members.
#[test]
fn interpolation_set_geometry_of_the_divergence_fixture() {
    let (n, t) = (4usize, 1usize);
    let fld = field();
    let f = sample_symmetric(Fe(17), t, fld, &mut ChaCha8Rng::seed_from_u64(5));
    // g = f + (1-x)(1-y): shares exactly row 1 with f
    let mut coeffs = Vec::new();
    for a in 0..=t {
        for b in 0..=t {
            let da = if a == 0 { Fe(1) } else { fld.neg(Fe(1)) };
            let db = if b == 0 { Fe(1) } else { fld.neg(Fe(1)) };
            coeffs.push(fld.add(f.coeff(a, b), fld.mul(da, db)));
        }
    }
    let g = abalab_core::poly::SymBivarPoly::from_coeffs(t, coeffs).unwrap();
    assert_eq!(row(&f, ProcessId(1), fld), row(&g, ProcessId(1), fld));

    let members = [ProcessId(1), ProcessId(2), ProcessId(4)];
    let mut rows: BTreeMap<ProcessId, _> = BTreeMap::new();
    rows.insert(ProcessId(1), row(&f, ProcessId(1), fld));
    rows.insert(ProcessId(2), row(&f, ProcessId(2), fld));
    rows.insert(ProcessId(4), row(&g, ProcessId(4), fld));
    let witness: BTreeSet<ProcessId> = members.iter().copied().collect();

    // brute-force every subset of size >= n-2t and keep the maximal
    // interpolation sets
    let mut sets: Vec<BTreeSet<ProcessId>> = Vec::new();
    for mask in 1u32..8 {
        let subset: BTreeSet<ProcessId> = members
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &p)| p)
            .collect();
        if subset.len() < n - 2 * t {
            continue;
        }
        if check_interpolation_set(&rows, &subset, &witness, t, n - 2 * t, fld)
            .unwrap()
            .is_some()
        {
            sets.push(subset);
        }
    }
    let maximal: Vec<&BTreeSet<ProcessId>> = sets
        .iter()
        .filter(|s| !sets.iter().any(|bigger| bigger.len() > s.len() && s.is_subset(bigger)))
        .collect();
    let expect_a: BTreeSet<ProcessId> = [ProcessId(1), ProcessId(2)].into_iter().collect();
    let expect_b: BTreeSet<ProcessId> = [ProcessId(1), ProcessId(4)].into_iter().collect();
    assert_eq!(maximal.len(), 2, "{maximal:?}");
    assert!(maximal.contains(&&expect_a) && maximal.contains(&&expect_b), "{maximal:?}");
    for (i, a) in maximal.iter().enumerate() {
        for b in &maximal[i + 1..] {
            assert!(a.intersection(b).count() <= t, "interpolation sets overlap beyond t");
        }
    }
    let smallest = maximal.iter().map(|s| s.len()).min().unwrap();
    assert!(n - 2 * t <= smallest && 2 * smallest <= n, "|S0| = {smallest} out of range");
}
