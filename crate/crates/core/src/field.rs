//! Prime-field arithmetic on `u64` residues.
//!
//! The field modulus is chosen per scenario (default `2^61 - 1`), so elements
//! are plain canonical residues and every operation goes through a [`Field`]
//! context carrying the modulus. Products are computed in `u128`, which is
//! exact for any modulus below `2^64`.

use serde::{Deserialize, Serialize};

/// Default modulus: the Mersenne prime `2^61 - 1`.
pub const DEFAULT_PRIME: u64 = (1 << 61) - 1;

/// A field element as a canonical residue in `[0, p)`.
///
/// The modulus is not stored; all arithmetic goes through [`Field`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Fe(pub u64);

impl std::fmt::Display for Fe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arithmetic context for a prime field `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    p: u64,
}

impl Field {
    /// Creates a field context.
    ///
    /// Returns `None` if `p` is not prime or is too small to host process
    /// ids and the coin modulus (callers additionally check `p > max(n, u)`).
    pub fn new(p: u64) -> Option<Self> {
        if p >= 2 && is_prime_u64(p) {
            Some(Self { p })
        } else {
            None
        }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn reduce(&self, v: u64) -> Fe {
        Fe(v % self.p)
    }

    pub fn zero(&self) -> Fe {
        Fe(0)
    }

    pub fn one(&self) -> Fe {
        Fe(1 % self.p)
    }

    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a.0 + b.0; // both < p <= 2^63, no overflow
        Fe(if s >= self.p { s - self.p } else { s })
    }

    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        Fe(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.p - b.0 })
    }

    pub fn neg(&self, a: Fe) -> Fe {
        Fe(if a.0 == 0 { 0 } else { self.p - a.0 })
    }

    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        Fe(((a.0 as u128 * b.0 as u128) % self.p as u128) as u64)
    }

    pub fn pow(&self, mut base: Fe, mut exp: u64) -> Fe {
        let mut acc = self.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    ///
    /// Panics on zero; the interpolation code only inverts differences of
    /// distinct evaluation points.
    pub fn inv(&self, a: Fe) -> Fe {
        assert!(a.0 != 0, "zero has no inverse");
        self.pow(a, self.p - 2)
    }
}

impl Default for Field {
    fn default() -> Self {
        Field { p: DEFAULT_PRIME }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
///
/// The witness set below is known to be exact for all `n < 3.3 * 10^24`.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        assert!(is_prime_u64(2));
        assert!(is_prime_u64(97));
        assert!(is_prime_u64(DEFAULT_PRIME));
        assert!(!is_prime_u64(1));
        assert!(!is_prime_u64(561)); // Carmichael
        assert!(!is_prime_u64((1 << 61) - 3));
    }

    #[test]
    fn arithmetic_roundtrips() {
        let f = Field::new(97).unwrap();
        for a in 0..97u64 {
            for b in 0..97u64 {
                let x = Fe(a);
                let y = Fe(b);
                assert_eq!(f.sub(f.add(x, y), y), x);
                if b != 0 {
                    assert_eq!(f.mul(f.mul(x, y), f.inv(y)), x);
                }
            }
        }
    }

    #[test]
    fn inverse_in_large_field() {
        let f = Field::default();
        let x = Fe(1234567890123456789 % DEFAULT_PRIME);
        assert_eq!(f.mul(x, f.inv(x)), f.one());
    }
}
