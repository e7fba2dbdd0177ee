//! Multiplicative arithmetic primitives: prime sieves, Kronecker symbols,
//! squarefree tests, and the congruence classes Delta(r, h) that the rest of
//! the crate counts against.
//!
//! Delta(r, h) is the set of squarefree integers congruent to r mod h, for an
//! odd modulus h >= 1. When gcd(r, h) is divisible by a square the class
//! contains no squarefree integer at all, so every count against it is zero;
//! `CongruenceTarget` records that degenerate case up front.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest `limit` accepted by `sieve_primes`; the sieve allocates one byte
/// per integer up to `limit`.
pub const SIEVE_LIMIT_MAX: u64 = 1 << 30;

/// Largest `limit` accepted by `SpfTable::build`; the table stores one u32
/// per integer up to `limit`.
pub const SPF_LIMIT_MAX: u64 = 1 << 28;

/// All primes `<= limit`, ascending.
pub fn sieve_primes(limit: u64) -> Result<Vec<u64>> {
    if limit > SIEVE_LIMIT_MAX {
        return Err(Error::resource(format!(
            "sieve limit {limit} exceeds cap {SIEVE_LIMIT_MAX}"
        )));
    }
    if limit < 2 {
        return Ok(Vec::new());
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut i = 2usize;
    while i * i <= n {
        if !composite[i] {
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
        i += 1;
    }
    Ok((2..=n).filter(|&k| !composite[k]).map(|k| k as u64).collect())
}

/// Kronecker symbol (a | n), extending the Jacobi symbol to all n.
///
/// Conventions: (a | 0) = 1 iff |a| = 1; (a | -1) = -1 iff a < 0;
/// (a | 2) = 0 for even a, +1 for a = +-1 mod 8, -1 for a = +-3 mod 8.
/// Completely multiplicative in both arguments.
pub fn kronecker(a: i64, n: i64) -> i32 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut a = a;
    let mut n = n;
    let mut sign = 1i32;
    if n < 0 {
        n = -n;
        if a < 0 {
            sign = -sign;
        }
    }
    let mut twos = 0u32;
    while n % 2 == 0 {
        n /= 2;
        twos += 1;
    }
    if twos > 0 {
        if a % 2 == 0 {
            return 0;
        }
        if twos % 2 == 1 {
            let m = a.rem_euclid(8);
            if m == 3 || m == 5 {
                sign = -sign;
            }
        }
    }
    // n is odd and positive: classic binary Jacobi loop.
    a = a.rem_euclid(n);
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let m = n % 8;
            if m == 3 || m == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// Moebius function of n >= 1 by trial division.
pub fn moebius(n: u64) -> i32 {
    assert!(n >= 1, "moebius is defined for n >= 1");
    let mut m = n;
    let mut mu = 1i32;
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            m /= d;
            if m % d == 0 {
                return 0;
            }
            mu = -mu;
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if m > 1 {
        mu = -mu;
    }
    mu
}

/// Euler phi of n >= 1 by trial division.
pub fn euler_phi(n: u64) -> u64 {
    assert!(n >= 1, "euler_phi is defined for n >= 1");
    let mut m = n;
    let mut phi = 1u64;
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            let mut pe = d - 1;
            m /= d;
            while m % d == 0 {
                pe *= d;
                m /= d;
            }
            phi *= pe;
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if m > 1 {
        phi *= m - 1;
    }
    phi
}

/// Least common multiple; errors instead of overflowing u64.
pub fn lcm(a: u64, b: u64) -> Result<u64> {
    if a == 0 || b == 0 {
        return Ok(0);
    }
    let g = num_integer::gcd(a, b);
    (a / g).checked_mul(b).ok_or_else(|| {
        Error::resource(format!("lcm({a}, {b}) overflows u64"))
    })
}

/// True iff no prime square divides |n|. Undefined (asserts) at n = 0.
pub fn is_squarefree(n: i64) -> bool {
    assert!(n != 0, "squarefreeness is undefined at 0");
    let mut m = n.unsigned_abs();
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            m /= d;
            if m % d == 0 {
                return false;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    true
}

/// Smallest-prime-factor table built by a linear sieve. Backs the batch
/// squarefree tests and factorizations in the census and sum loops, where
/// per-call trial division would dominate the runtime.
pub struct SpfTable {
    spf: Vec<u32>,
    primes: Vec<u32>,
}

impl SpfTable {
    pub fn build(limit: u64) -> Result<Self> {
        if limit > SPF_LIMIT_MAX {
            return Err(Error::resource(format!(
                "spf table limit {limit} exceeds cap {SPF_LIMIT_MAX}"
            )));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes: Vec<u32> = Vec::new();
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            for &p in &primes {
                let p = p as usize;
                if p > spf[i] as usize || i * p > n {
                    break;
                }
                spf[i * p] = p as u32;
            }
        }
        Ok(SpfTable { spf, primes })
    }

    pub fn limit(&self) -> u64 {
        (self.spf.len() - 1) as u64
    }

    /// Primes `<= limit`, ascending.
    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Smallest prime factor of n, for 2 <= n <= limit.
    pub fn smallest_prime_factor(&self, n: u64) -> u32 {
        self.spf[n as usize]
    }

    /// Prime factorization of n >= 1 as (p, exponent) pairs, ascending.
    pub fn factorize(&self, n: u64) -> Vec<(u64, u32)> {
        let mut m = n as usize;
        let mut out = Vec::new();
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut e = 0u32;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            out.push((p as u64, e));
        }
        out
    }

    /// Squarefree test for 1 <= n <= limit.
    pub fn is_squarefree(&self, n: u64) -> bool {
        let mut m = n as usize;
        while m > 1 {
            let p = self.spf[m] as usize;
            m /= p;
            if m % p == 0 {
                return false;
            }
        }
        true
    }

    /// Moebius function for 1 <= n <= limit.
    pub fn moebius(&self, n: u64) -> i32 {
        let mut m = n as usize;
        let mut mu = 1i32;
        while m > 1 {
            let p = self.spf[m] as usize;
            m /= p;
            if m % p == 0 {
                return 0;
            }
            mu = -mu;
        }
        mu
    }

    /// Euler phi for 1 <= n <= limit.
    pub fn euler_phi(&self, n: u64) -> u64 {
        let mut m = n as usize;
        let mut phi = 1u64;
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut pe = (p - 1) as u64;
            m /= p;
            while m % p == 0 {
                pe *= p as u64;
                m /= p;
            }
            phi *= pe;
        }
        phi
    }
}

/// The congruence class Delta(r, h): squarefree integers congruent to r mod h.
///
/// `canonical_r` is the representative of r in [0, h). `gcd_rh_squarefree`
/// is false exactly when a prime square divides gcd(canonical_r, h) (with
/// gcd(0, h) = h), in which case Delta(r, h) is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongruenceTarget {
    pub r: i64,
    pub h: u64,
    pub canonical_r: u64,
    pub gcd_rh_squarefree: bool,
}

impl CongruenceTarget {
    pub fn new(r: i64, h: u64) -> Result<Self> {
        if h == 0 || h % 2 == 0 {
            return Err(Error::invalid(format!(
                "modulus h must be odd and positive, got {h}"
            )));
        }
        let canonical_r = r.rem_euclid(h as i64) as u64;
        let g = num_integer::gcd(canonical_r, h); // gcd(0, h) = h
        let gcd_rh_squarefree = is_squarefree(g as i64);
        Ok(CongruenceTarget {
            r,
            h,
            canonical_r,
            gcd_rh_squarefree,
        })
    }

    /// True iff n is congruent to r mod h. Does not test squarefreeness.
    pub fn congruence_matches(&self, n: i64) -> bool {
        n.rem_euclid(self.h as i64) as u64 == self.canonical_r
    }

    /// Membership in Delta(r, h). Returns false at n = 0.
    pub fn in_delta(&self, n: i64) -> bool {
        if !self.gcd_rh_squarefree || n == 0 {
            return false;
        }
        self.congruence_matches(n) && is_squarefree(n)
    }
}

impl std::fmt::Display for CongruenceTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Delta({}, {})", self.canonical_r, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
        let mut acc = 1u64;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % m;
            }
            b = b * b % m;
            e >>= 1;
        }
        acc
    }

    #[test]
    fn sieve_small() {
        let ps = sieve_primes(100).unwrap();
        assert_eq!(ps.len(), 25);
        assert_eq!(ps.first(), Some(&2));
        assert_eq!(ps.last(), Some(&97));
        assert!(sieve_primes(1).unwrap().is_empty());
        assert_eq!(sieve_primes(2).unwrap(), vec![2]);
    }

    #[test]
    fn sieve_limit_capped() {
        assert!(matches!(
            sieve_primes(SIEVE_LIMIT_MAX + 1),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn kronecker_examples() {
        assert_eq!(kronecker(2, 7), 1);
        assert_eq!(kronecker(0, 5), 0);
        assert_eq!(kronecker(-19, 3), -1);
        assert_eq!(kronecker(5, 1), 1);
        assert_eq!(kronecker(-1, 0), 1);
        assert_eq!(kronecker(3, 0), 0);
        // (a | 2) table
        assert_eq!(kronecker(1, 2), 1);
        assert_eq!(kronecker(3, 2), -1);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(7, 2), 1);
        assert_eq!(kronecker(4, 2), 0);
        // negative lower argument
        assert_eq!(kronecker(-1, 5), 1);
        assert_eq!(kronecker(-1, 7), -1);
        assert_eq!(kronecker(2, -7), 1);
        assert_eq!(kronecker(-2, -7), 1); // (-2 | -1) = -1 and (-2 | 7) = -1
        assert_eq!(kronecker(-2, 7), -1);
    }

    #[test]
    fn kronecker_euler_criterion() {
        // (a | p) = a^((p-1)/2) mod p for odd primes p and gcd(a, p) = 1.
        for &p in sieve_primes(200).unwrap().iter().skip(1) {
            for a in 1..p {
                let e = pow_mod(a, (p - 1) / 2, p);
                let want = if e == 1 { 1 } else { -1 };
                assert_eq!(kronecker(a as i64, p as i64), want, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn kronecker_row_sums_vanish() {
        // Full residue sums of a nontrivial character are zero.
        for &p in sieve_primes(1000).unwrap().iter().skip(1) {
            let s: i64 = (0..p).map(|a| kronecker(a as i64, p as i64) as i64).sum();
            assert_eq!(s, 0, "p={p}");
        }
    }

    proptest! {
        #[test]
        fn kronecker_multiplicative_upper(a in -300i64..300, b in -300i64..300, n in 1i64..10_000) {
            prop_assert_eq!(
                kronecker(a.saturating_mul(b), n),
                kronecker(a, n) * kronecker(b, n)
            );
        }

        #[test]
        fn kronecker_multiplicative_lower(a in -300i64..300, m in 1i64..100, n in 1i64..100) {
            prop_assert_eq!(kronecker(a, m * n), kronecker(a, m) * kronecker(a, n));
        }

        #[test]
        fn squarefree_agrees_with_moebius(n in 1i64..100_000) {
            prop_assert_eq!(is_squarefree(n), moebius(n as u64) != 0);
            prop_assert_eq!(is_squarefree(-n), moebius(n as u64) != 0);
        }

        #[test]
        fn phi_moebius_match_spf_table(n in 1u64..5_000) {
            let spf = SpfTable::build(5_000).unwrap();
            prop_assert_eq!(euler_phi(n), spf.euler_phi(n));
            prop_assert_eq!(moebius(n), spf.moebius(n));
            prop_assert_eq!(is_squarefree(n as i64), spf.is_squarefree(n));
        }
    }

    #[test]
    fn phi_and_lcm_values() {
        assert_eq!(euler_phi(9), 6);
        assert_eq!(euler_phi(1), 1);
        assert_eq!(lcm(225, 15).unwrap(), 225);
        assert_eq!(lcm(4, 6).unwrap(), 12);
        assert!(lcm(u64::MAX, u64::MAX - 1).is_err());
    }

    #[test]
    fn spf_table_factorizes() {
        let spf = SpfTable::build(10_000).unwrap();
        assert_eq!(spf.factorize(9800), vec![(2, 3), (5, 2), (7, 2)]);
        assert_eq!(spf.factorize(1), vec![]);
        assert_eq!(spf.smallest_prime_factor(9991), 97);
        let ps = sieve_primes(10_000).unwrap();
        assert_eq!(
            spf.primes().iter().map(|&p| p as u64).collect::<Vec<_>>(),
            ps
        );
    }

    #[test]
    fn target_construction() {
        let t = CongruenceTarget::new(-4, 9).unwrap();
        assert_eq!(t.canonical_r, 5);
        assert!(t.gcd_rh_squarefree);

        // gcd(0, 9) = 9 = 3^2 is not squarefree: empty class.
        let t = CongruenceTarget::new(0, 9).unwrap();
        assert_eq!(t.canonical_r, 0);
        assert!(!t.gcd_rh_squarefree);
        for n in [-50i64, -9, 9, 18, 27] {
            assert!(!t.in_delta(n));
        }

        assert!(CongruenceTarget::new(1, 4).is_err());
        assert!(CongruenceTarget::new(1, 0).is_err());
    }

    #[test]
    fn delta_membership() {
        let t = CongruenceTarget::new(0, 1).unwrap();
        assert!(t.in_delta(-19));
        assert!(t.in_delta(-11));
        assert!(!t.in_delta(-16));
        assert!(!t.in_delta(0));

        let t = CongruenceTarget::new(2, 3).unwrap();
        assert!(t.in_delta(-19)); // -19 = 2 mod 3, squarefree
        assert!(!t.in_delta(-11)); // -11 = 1 mod 3
        assert!(!t.in_delta(-4)); // right class cannot rescue a square factor
    }

    proptest! {
        #[test]
        fn empty_class_stays_empty(n in -200_000i64..200_000, r in -50i64..50, k in 1u64..6) {
            // Any h with a squared prime dividing gcd(r, h) yields no members.
            let h = 9 * (2 * k - 1);
            let t = CongruenceTarget::new(9 * r, h).unwrap();
            prop_assume!(!t.gcd_rh_squarefree);
            prop_assert!(!t.in_delta(n));
        }
    }
}
