//! Univariate and symmetric bivariate polynomials over a prime field, with
//! the Lagrange interpolation and consistency checks the secret sharing
//! layer is built on.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Fe, Field};
use crate::{pair, Pair, ProcessId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("need at least {need} rows, got {got}")]
    InsufficientRows { got: usize, need: usize },
    #[error("subset of size {got} is below the required {need}")]
    SubsetTooSmall { got: usize, need: usize },
    #[error("subset names process {0} with no candidate row")]
    MissingRow(ProcessId),
}

/// Univariate polynomial of degree at most `t`, coefficients low-to-high.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UniPoly {
    coeffs: Vec<Fe>,
}

impl UniPoly {
    pub fn new(coeffs: Vec<Fe>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: Fe) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[Fe] {
        &self.coeffs
    }

    /// Degree bound check used when a polynomial arrives over the wire.
    pub fn degree_at_most(&self, t: usize) -> bool {
        self.coeffs.len() <= t + 1
    }

    pub fn eval(&self, x: Fe, field: Field) -> Fe {
        let mut acc = field.zero();
        for &c in self.coeffs.iter().rev() {
            acc = field.add(field.mul(acc, x), c);
        }
        acc
    }
}

/// Symmetric bivariate polynomial of degree at most `t` in each variable.
///
/// `coeffs[a][b]` is the coefficient of `x^a y^b`, stored row-major; the
/// symmetry invariant `coeffs[a][b] == coeffs[b][a]` is maintained by every
/// constructor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymBivarPoly {
    t: usize,
    coeffs: Vec<Fe>,
}

impl SymBivarPoly {
    fn zero(t: usize) -> Self {
        Self { t, coeffs: vec![Fe(0); (t + 1) * (t + 1)] }
    }

    /// Builds a polynomial from a row-major `(t+1) x (t+1)` coefficient
    /// matrix; `None` unless the matrix is square of the right size and
    /// symmetric.
    pub fn from_coeffs(t: usize, coeffs: Vec<Fe>) -> Option<Self> {
        if coeffs.len() != (t + 1) * (t + 1) {
            return None;
        }
        let f = Self { t, coeffs };
        if f.is_symmetric() {
            Some(f)
        } else {
            None
        }
    }

    pub fn degree_bound(&self) -> usize {
        self.t
    }

    pub fn coeff(&self, a: usize, b: usize) -> Fe {
        self.coeffs[a * (self.t + 1) + b]
    }

    fn coeff_mut(&mut self, a: usize, b: usize) -> &mut Fe {
        &mut self.coeffs[a * (self.t + 1) + b]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..=self.t).all(|a| (a..=self.t).all(|b| self.coeff(a, b) == self.coeff(b, a)))
    }

    pub fn secret(&self) -> Fe {
        self.coeff(0, 0)
    }

    pub fn eval(&self, x: Fe, y: Fe, field: Field) -> Fe {
        // Horner in x over row polynomials in y.
        let mut acc = field.zero();
        for a in (0..=self.t).rev() {
            let mut row = field.zero();
            for b in (0..=self.t).rev() {
                row = field.add(field.mul(row, y), self.coeff(a, b));
            }
            acc = field.add(field.mul(acc, x), row);
        }
        acc
    }

    /// The row polynomial `y -> f(x, y)` in the given field.
    pub fn row_in(&self, x: Fe, field: Field) -> UniPoly {
        let mut coeffs = vec![Fe(0); self.t + 1];
        // coefficient of y^b is sum_a coeffs[a][b] x^a
        for (b, out) in coeffs.iter_mut().enumerate() {
            let mut acc = field.zero();
            for a in (0..=self.t).rev() {
                acc = field.add(field.mul(acc, x), self.coeff(a, b));
            }
            *out = acc;
        }
        UniPoly::new(coeffs)
    }
}

/// Samples a uniform symmetric degree-`t` bivariate polynomial with
/// `f(0,0) = secret`; all free coefficients are uniform subject to symmetry.
pub fn sample_symmetric<R: Rng>(secret: Fe, t: usize, field: Field, rng: &mut R) -> SymBivarPoly {
    let mut f = SymBivarPoly::zero(t);
    *f.coeff_mut(0, 0) = field.reduce(secret.0);
    for a in 0..=t {
        for b in a..=t {
            if a == 0 && b == 0 {
                continue;
            }
            let c = Fe(rng.gen_range(0..field.modulus()));
            *f.coeff_mut(a, b) = c;
            *f.coeff_mut(b, a) = c;
        }
    }
    f
}

/// The row sent to process `i` by a dealer holding `f`.
pub fn row(f: &SymBivarPoly, i: ProcessId, field: Field) -> UniPoly {
    f.row_in(i.point(), field)
}

/// Outcome of [`interpolate_symmetric`]: either the unique consistent
/// polynomial or the full set of pairwise-inconsistent id pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interpolation {
    Consistent(SymBivarPoly),
    Violations(BTreeSet<Pair>),
}

/// Interpolates the unique symmetric bivariate degree-`t` polynomial that
/// agrees with every supplied row at every supplied id, or reports all
/// violating pairs when the rows are not pairwise consistent.
pub fn interpolate_symmetric(
    rows: &BTreeMap<ProcessId, UniPoly>,
    t: usize,
    field: Field,
) -> Result<Interpolation, PolyError> {
    if rows.len() < t + 1 {
        return Err(PolyError::InsufficientRows { got: rows.len(), need: t + 1 });
    }
    let mut violations = BTreeSet::new();
    for (&i, fi) in rows {
        for (&j, fj) in rows.range(i..).skip(1) {
            if fi.eval(j.point(), field) != fj.eval(i.point(), field) {
                violations.insert(pair(i, j));
            }
        }
    }
    if !violations.is_empty() {
        return Ok(Interpolation::Violations(violations));
    }
    let seed: Vec<ProcessId> = rows.keys().copied().take(t + 1).collect();
    let f = lagrange_double_sum(&seed, rows, t, field);
    // Uniqueness makes full agreement follow from pairwise consistency, but
    // the contract demands it verified against every input, not just the
    // seeding subset.
    assert!(f.is_symmetric(), "interpolated polynomial lost symmetry");
    for (&i, fi) in rows {
        for &j in rows.keys() {
            assert!(
                f.eval(i.point(), j.point(), field) == fi.eval(j.point(), field),
                "interpolation disagrees with supplied rows"
            );
        }
    }
    Ok(Interpolation::Consistent(f))
}

/// Builds `sum_{i,j in seed} L_i(x) L_j(y) rows[i](j)` from a size-`t+1`
/// seed subset.
fn lagrange_double_sum(
    seed: &[ProcessId],
    rows: &BTreeMap<ProcessId, UniPoly>,
    t: usize,
    field: Field,
) -> SymBivarPoly {
    debug_assert_eq!(seed.len(), t + 1);
    let basis: Vec<Vec<Fe>> = seed.iter().map(|&i| lagrange_basis(seed, i, field)).collect();
    let mut f = SymBivarPoly::zero(t);
    for (bi, &i) in basis.iter().zip(seed) {
        let fi = &rows[&i];
        for (bj, &j) in basis.iter().zip(seed) {
            let v = fi.eval(j.point(), field);
            if v == Fe(0) {
                continue;
            }
            for (a, &ca) in bi.iter().enumerate() {
                let ca_v = field.mul(ca, v);
                if ca_v == Fe(0) {
                    continue;
                }
                for (b, &cb) in bj.iter().enumerate() {
                    let cur = f.coeff(a, b);
                    *f.coeff_mut(a, b) = field.add(cur, field.mul(ca_v, cb));
                }
            }
        }
    }
    f
}

/// Coefficients of the Lagrange basis polynomial for `i` over `points`.
fn lagrange_basis(points: &[ProcessId], i: ProcessId, field: Field) -> Vec<Fe> {
    let mut num = vec![field.one()]; // product of (x - k)
    let mut denom = field.one();
    for &k in points {
        if k == i {
            continue;
        }
        let kp = k.point();
        // multiply num by (x - k)
        let mut next = vec![Fe(0); num.len() + 1];
        for (d, &c) in num.iter().enumerate() {
            next[d + 1] = field.add(next[d + 1], c);
            next[d] = field.sub(next[d], field.mul(c, kp));
        }
        num = next;
        denom = field.mul(denom, field.sub(i.point(), kp));
    }
    let inv = field.inv(denom);
    for c in &mut num {
        *c = field.mul(*c, inv);
    }
    num
}

/// Checks whether `subset` is an interpolation set: its rows must fit one
/// symmetric degree-`t` bivariate polynomial that also matches them at every
/// witness point. Returns the polynomial on success, `None` on failure.
///
/// `min_subset_size` is the protocol's `n - 2t` floor.
pub fn check_interpolation_set(
    candidates: &BTreeMap<ProcessId, UniPoly>,
    subset: &BTreeSet<ProcessId>,
    witness_points: &BTreeSet<ProcessId>,
    t: usize,
    min_subset_size: usize,
    field: Field,
) -> Result<Option<SymBivarPoly>, PolyError> {
    if subset.len() < min_subset_size {
        return Err(PolyError::SubsetTooSmall { got: subset.len(), need: min_subset_size });
    }
    let mut rows = BTreeMap::new();
    for &i in subset {
        match candidates.get(&i) {
            Some(r) => {
                rows.insert(i, r.clone());
            }
            None => return Err(PolyError::MissingRow(i)),
        }
    }
    if rows.len() < t + 1 {
        return Err(PolyError::InsufficientRows { got: rows.len(), need: t + 1 });
    }
    // Pairwise consistency within the subset, then build and verify against
    // the witness points.
    for (&i, fi) in &rows {
        for (&j, fj) in rows.range(i..).skip(1) {
            if fi.eval(j.point(), field) != fj.eval(i.point(), field) {
                return Ok(None);
            }
        }
    }
    let seed: Vec<ProcessId> = rows.keys().copied().take(t + 1).collect();
    let f = lagrange_double_sum(&seed, &rows, t, field);
    if !f.is_symmetric() {
        return Ok(None);
    }
    for (&i, fi) in &rows {
        for &j in witness_points {
            if f.eval(i.point(), j.point(), field) != fi.eval(j.point(), field) {
                return Ok(None);
            }
        }
    }
    Ok(Some(f))
}
