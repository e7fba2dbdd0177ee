//! The Euler-product constants that govern how often a_p^2 - 4p is squarefree
//! in a congruence class, and the finite character sums c_t(n) they are built
//! from.
//!
//! For odd n, c_t(n) sums the Jacobi symbol (alpha | n) over the residues
//! alpha mod n with gcd(t^2 - alpha, n) = 1 and alpha = r mod gcd(n, h).
//! It is multiplicative in n, with prime-power values given by `c_t_closed`.
//! Two routes to the constant attached to a fixed trace t are implemented:
//! an Euler product (`trace_constant_product`) and a truncated double sum
//! (`trace_constant_doublesum`); they must agree in the limit.
//!
//! The main constant 'c' predicting the census averages is exposed twice as
//! well: `main_constant` multiplies the per-prime densities directly, while
//! `main_constant_alt` routes through the trace-constant product form. The
//! two factorizations agree prime by prime as exact rationals, which the
//! test suites check without any rounding.
//!
//! All per-prime factors are exact rationals; a value is rounded to f64 once,
//! after the truncated product is assembled. Truncating at P drops factors
//! 1 - O(1/l^2), so the relative error is at most sum_{l > P} 3/l^2 < 3/(P-1),
//! exposed as `tail_bound`.

use crate::error::{Error, Result};
use crate::modarith::{kronecker, sieve_primes, CongruenceTarget, SpfTable};
use crate::ExactRational;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

/// Default truncation point for Euler products (relative tail < 3e-6).
pub const DEFAULT_PRIME_CUT: u64 = 1_000_000;

fn rat(n: i128, d: i128) -> ExactRational {
    ExactRational::new(BigInt::from(n), BigInt::from(d))
}

pub(crate) fn is_odd_prime(p: u64) -> bool {
    if p < 3 || p % 2 == 0 {
        return false;
    }
    let mut d = 3u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn require_odd_prime(p: u64) -> Result<()> {
    if is_odd_prime(p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{p} is not an odd prime")))
    }
}

/// A truncated Euler product: exact per-prime factors, the product rounded
/// once, and a rigorous bound on what truncation discarded.
///
/// Invariant: `value` equals `prefactor` times the product of `factors`,
/// multiplied exactly and rounded once (`exact_partial_product` rebuilds it),
/// and the untruncated value differs from `value` by at most `tail_bound`.
#[derive(Debug, Clone)]
pub struct EulerProductValue {
    pub value: f64,
    pub tail_bound: f64,
    pub prime_cut: u64,
    /// True when the congruence class is empty and the value is exactly 0.
    pub vanishes: bool,
    pub prefactor: ExactRational,
    /// Local factor at each odd prime contributing to the product. Primes
    /// dividing h appear even beyond `prime_cut`.
    pub factors: BTreeMap<u64, ExactRational>,
}

fn product_tree(mut layer: Vec<BigInt>) -> BigInt {
    if layer.is_empty() {
        return BigInt::one();
    }
    while layer.len() > 1 {
        layer = layer
            .chunks(2)
            .map(|c| {
                if c.len() == 2 {
                    &c[0] * &c[1]
                } else {
                    c[0].clone()
                }
            })
            .collect();
    }
    layer.pop().unwrap()
}

/// Round num/den to the nearest f64 without reducing the fraction first.
fn big_ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    assert!(!den.is_zero());
    if num.is_zero() {
        return 0.0;
    }
    let sign = if num.is_negative() != den.is_negative() {
        -1.0
    } else {
        1.0
    };
    let n = num.magnitude();
    let d = den.magnitude();
    let shift_n = (n.bits() as i64 - 96).max(0) as u64;
    let shift_d = (d.bits() as i64 - 96).max(0) as u64;
    let nh = (n >> shift_n).to_f64().expect("<=96-bit magnitude");
    let dh = (d >> shift_d).to_f64().expect("<=96-bit magnitude");
    sign * (nh / dh) * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
}

impl EulerProductValue {
    pub(crate) fn assemble(
        prefactor: ExactRational,
        factors: BTreeMap<u64, ExactRational>,
        prime_cut: u64,
    ) -> Self {
        let mut nums = vec![prefactor.numer().clone()];
        let mut dens = vec![prefactor.denom().clone()];
        for f in factors.values() {
            nums.push(f.numer().clone());
            dens.push(f.denom().clone());
        }
        let value = big_ratio_to_f64(&product_tree(nums), &product_tree(dens));
        let tail_bound = value.abs() * 3.0 / (prime_cut.max(2) - 1) as f64;
        EulerProductValue {
            value,
            tail_bound,
            prime_cut,
            vanishes: false,
            prefactor,
            factors,
        }
    }

    pub(crate) fn vanishing(prime_cut: u64) -> Self {
        EulerProductValue {
            value: 0.0,
            tail_bound: 0.0,
            prime_cut,
            vanishes: true,
            prefactor: ExactRational::zero(),
            factors: BTreeMap::new(),
        }
    }

    /// Exact product of prefactor and all stored factors. Intended for
    /// cross-checks at small cuts; reduces one large fraction.
    pub fn exact_partial_product(&self) -> ExactRational {
        let mut nums = vec![self.prefactor.numer().clone()];
        let mut dens = vec![self.prefactor.denom().clone()];
        for f in self.factors.values() {
            nums.push(f.numer().clone());
            dens.push(f.denom().clone());
        }
        ExactRational::new(product_tree(nums), product_tree(dens))
    }
}

/// G(p) = (2p^2 + p - 1) / (p^4 - p^3 - 2p^2 - p + 1): the relative boost a
/// prime p | t gives the trace constant, via C_t = P(r,h) prod (1 + G(p)).
pub fn g_factor(p: u64) -> Result<ExactRational> {
    require_odd_prime(p)?;
    let p = p as i128;
    Ok(rat(2 * p * p + p - 1, p * p * p * p - p * p * p - 2 * p * p - p + 1))
}

/// Density of matrices mod l^2 whose discriminant tr^2 - 4 det survives the
/// squarefree condition at l: (l^4 - 2l^2 - l + 1) / (l^2 (l^2 - 1)).
pub fn disc_squarefree_local_factor(ell: u64) -> Result<ExactRational> {
    require_odd_prime(ell)?;
    let l = ell as i128;
    Ok(rat(
        l * l * l * l - 2 * l * l - l + 1,
        l * l * (l * l - 1),
    ))
}

/// Density of matrices mod l^max(alpha,2) whose discriminant is nonzero
/// mod l^2 and congruent to r mod l^alpha. Four branches on l, r, alpha.
pub fn disc_class_local_factor(ell: u64, alpha: u32, r: i64) -> Result<ExactRational> {
    require_odd_prime(ell)?;
    if alpha == 0 {
        return Err(Error::invalid("alpha must be >= 1".to_string()));
    }
    let l = ell as i128;
    let la = l
        .checked_pow(alpha)
        .ok_or_else(|| Error::resource(format!("{ell}^{alpha} overflows")))?;
    let rr = (r as i128).rem_euclid(la);
    if rr % l != 0 {
        let chi = kronecker(r, ell as i64) as i128;
        Ok(rat(l * (l - 1 - chi), (l - 1) * (l - chi) * la))
    } else if alpha == 1 {
        Ok(rat(l - 1, l * l))
    } else if rr % (l * l) == 0 {
        Ok(ExactRational::zero())
    } else {
        Ok(rat(1, la))
    }
}

/// Local factor at l of the density of squarefree group orders p + 1 - a_p:
/// 1 - (l^3 - l - 1) / ((l^2 - 1) l^2 (l - 1)). Cross-checked against direct
/// matrix enumeration (condition det - tr + 1 nonzero mod l^2) in `gl2`.
pub fn squarefree_order_local_factor(ell: u64) -> Result<ExactRational> {
    require_odd_prime(ell)?;
    let l = ell as i128;
    Ok(rat(1, 1) - rat(l * l * l - l - 1, (l * l - 1) * l * l * (l - 1)))
}

/// c_t(n) by its definition: the sum of (alpha | n) over alpha mod n with
/// gcd(t^2 - alpha, n) = 1 and alpha = r mod gcd(n, h). Requires odd n >= 1.
pub fn c_t_bruteforce(t: i64, n: u64, target: &CongruenceTarget) -> i64 {
    assert!(n >= 1 && n % 2 == 1, "c_t is defined for odd n >= 1");
    let g = num_integer::gcd(n, target.h);
    let r_mod_g = target.canonical_r % g;
    let t2 = (t as i128) * (t as i128);
    let mut sum = 0i64;
    for alpha in 0..n {
        if alpha % g != r_mod_g {
            continue;
        }
        let diff = (t2 - alpha as i128).rem_euclid(n as i128) as u64;
        if num_integer::gcd(diff, n) != 1 {
            continue;
        }
        sum += kronecker(alpha as i64, n as i64) as i64;
    }
    sum
}

/// c_t at an odd prime power p^j, in closed form.
///
/// For p | h (requires gcd(t^2 - r, h) = 1): (r | p^j) * p^j / gcd(p^j, h).
/// For p not dividing h, by the parity of j and whether p | t:
/// j odd and p | t: 0; j odd, p not | t: -p^(j-1);
/// j even and p | t: p^j - p^(j-1); j even, p not | t: p^j - 2 p^(j-1).
pub fn c_t_closed(t: i64, p: u64, j: u32, target: &CongruenceTarget) -> Result<i64> {
    require_odd_prime(p)?;
    if j == 0 {
        return Err(Error::invalid("exponent j must be >= 1".to_string()));
    }
    let pj = (p as i64)
        .checked_pow(j)
        .ok_or_else(|| Error::resource(format!("{p}^{j} overflows i64")))?;
    if target.h % p == 0 {
        let t2r = (t as i128) * (t as i128) - target.r as i128;
        let g = num_integer::gcd(t2r.unsigned_abs() % target.h as u128, target.h as u128);
        if g != 1 {
            return Err(Error::invalid(format!(
                "c_t closed form at p = {p} | h needs gcd(t^2 - r, h) = 1, got gcd {g}"
            )));
        }
        let chi = kronecker(target.r, p as i64) as i64;
        let chi_j = if j % 2 == 0 { chi * chi } else { chi };
        let gph = num_integer::gcd(pj as u64, target.h) as i64;
        Ok(chi_j * (pj / gph))
    } else {
        let p = p as i64;
        let pj1 = pj / p;
        Ok(match (j % 2 == 1, t % p == 0) {
            (true, true) => 0,
            (true, false) => -pj1,
            (false, true) => pj - pj1,
            (false, false) => pj - 2 * pj1,
        })
    }
}

/// c_t(n) assembled multiplicatively from the closed form over the
/// factorization of odd n. The caller must have checked gcd(t^2 - r, h) = 1
/// whenever gcd(n, h) > 1 (the sum and product drivers do).
pub fn c_t_factored(t: i64, n: u64, spf: &SpfTable, target: &CongruenceTarget) -> Result<i64> {
    debug_assert!(n % 2 == 1);
    let mut val = 1i64;
    for (p, j) in spf.factorize(n) {
        let f = c_t_closed(t, p, j, target)?;
        if f == 0 {
            return Ok(0);
        }
        val *= f; // |c_t(p^j)| <= p^j, so |val| <= n
    }
    Ok(val)
}

fn require_usable_target(target: &CongruenceTarget) -> Result<()> {
    if !target.gcd_rh_squarefree {
        return Err(Error::invalid(format!(
            "{target} is empty: gcd(r, h) has a square factor"
        )));
    }
    Ok(())
}

/// The quartic local factor of P(r, h) at primes away from h:
/// (p^4 - p^3 - 2p^2 - p + 1) / (p (p - 1) (p^2 - 1)).
fn trace_quartic_factor(ell: u64) -> ExactRational {
    let p = ell as i128;
    rat(
        p * p * p * p - p * p * p - 2 * p * p - p + 1,
        p * (p - 1) * (p * p - 1),
    )
}

/// Per-prime factor of P(r, h) at a prime dividing h, with this prime's share
/// of the 1/phi(h) prefactor folded in so the product over all primes times
/// prefactor 1 reconstructs P(r, h).
fn trace_h_factor(ell: u64, alpha: u32, target: &CongruenceTarget) -> ExactRational {
    let l = ell as i128;
    let chi = kronecker(target.r, ell as i64) as i128;
    // 1 / (l^(alpha-1) (l - 1)) from phi(h), then l / (l - chi), then the
    // extra (1 - 1/l) exactly when l || h and l | r.
    let mut f = rat(1, l.pow(alpha - 1) * (l - 1)) * rat(l, l - chi);
    if alpha == 1 && chi == 0 {
        f *= rat(l - 1, l);
    }
    f
}

/// C_t = P(r, h) * prod_{p | t, p not | h} (1 + G(p)) as a truncated Euler
/// product. Requires odd nonzero t with gcd(t^2 - r, h) = 1, and a
/// non-degenerate class.
pub fn trace_constant_product(
    t: i64,
    target: &CongruenceTarget,
    prime_cut: u64,
) -> Result<EulerProductValue> {
    require_usable_target(target)?;
    if t == 0 || t % 2 == 0 {
        return Err(Error::invalid(format!("t must be odd and nonzero, got {t}")));
    }
    let t2r = (t as i128) * (t as i128) - target.r as i128;
    if num_integer::gcd(t2r.unsigned_abs() % target.h as u128, target.h as u128) != 1 {
        return Err(Error::invalid(format!(
            "C_t needs gcd(t^2 - r, h) = 1 (t = {t}, {target})"
        )));
    }
    if prime_cut < 3 {
        return Err(Error::invalid("prime_cut must be >= 3".to_string()));
    }

    let t_primes = odd_prime_divisors(t.unsigned_abs());
    let mut factors = BTreeMap::new();
    for (p, a) in factorize_odd(target.h) {
        factors.insert(p, trace_h_factor(p, a, target));
    }
    for &p in sieve_primes(prime_cut)?.iter().skip(1) {
        if target.h % p != 0 {
            factors.insert(p, trace_quartic_factor(p));
        }
    }
    for &p in &t_primes {
        if target.h % p == 0 {
            continue;
        }
        let boost = ExactRational::one() + g_factor(p)?;
        factors
            .entry(p)
            .and_modify(|f| *f *= boost.clone())
            .or_insert_with(|| trace_quartic_factor(p) * boost.clone());
    }
    Ok(EulerProductValue::assemble(
        ExactRational::one(),
        factors,
        prime_cut,
    ))
}

/// Factorization of an odd n >= 1 by trial division.
pub(crate) fn factorize_odd(mut n: u64) -> Vec<(u64, u32)> {
    debug_assert!(n % 2 == 1);
    let mut out = Vec::new();
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 2;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Odd prime divisors of |t|.
fn odd_prime_divisors(mut t: u64) -> Vec<u64> {
    while t % 2 == 0 {
        t /= 2;
    }
    factorize_odd(t).into_iter().map(|(p, _)| p).collect()
}

/// The truncated double sum converging to C_t:
/// sum over odd n <= n_max of c_t(n)/n times the inner sum over odd
/// squarefree d <= d_max, gcd(d, nt) = 1, gcd(d^2, h) | r, of
/// mu(d) / phi(lcm(n d^2, h)). Same preconditions as the product form.
pub fn trace_constant_doublesum(
    t: i64,
    target: &CongruenceTarget,
    n_max: u64,
    d_max: u64,
) -> Result<f64> {
    require_usable_target(target)?;
    if t == 0 || t % 2 == 0 {
        return Err(Error::invalid(format!("t must be odd and nonzero, got {t}")));
    }
    let t2r = (t as i128) * (t as i128) - target.r as i128;
    if num_integer::gcd(t2r.unsigned_abs() % target.h as u128, target.h as u128) != 1 {
        return Err(Error::invalid(format!(
            "the double sum needs gcd(t^2 - r, h) = 1 (t = {t}, {target})"
        )));
    }
    let spf = SpfTable::build(n_max.max(d_max).max(target.h).max(2))?;

    // Admissible d with their Moebius signs and factorizations, fixed once.
    let mut ds: Vec<(u64, i64, Vec<(u64, u32)>)> = Vec::new();
    let mut d = 1u64;
    while d <= d_max {
        if spf.moebius(d) != 0 && num_integer::gcd(d, t.unsigned_abs()) == 1 {
            let g = num_integer::gcd(d * d, target.h);
            if target.canonical_r % g == 0 {
                ds.push((d, spf.moebius(d) as i64, spf.factorize(d)));
            }
        }
        d += 2;
    }

    let h_factors = spf.factorize(target.h);
    let mut sum = 0.0f64;
    let mut n = 1u64;
    while n <= n_max {
        let c = c_t_factored(t, n, &spf, target)?;
        if c != 0 {
            let n_factors = spf.factorize(n);
            let mut inner = 0.0f64;
            for (d, mu, d_factors) in &ds {
                if num_integer::gcd(*d, n) != 1 {
                    continue;
                }
                let phi = phi_of_lcm(&n_factors, d_factors, &h_factors);
                inner += *mu as f64 / phi as f64;
            }
            sum += c as f64 / n as f64 * inner;
        }
        n += 2;
    }
    Ok(sum)
}

/// phi(lcm(n d^2, h)) from the three factorizations; n and d coprime.
pub(crate) fn phi_of_lcm(
    n_factors: &[(u64, u32)],
    d_factors: &[(u64, u32)],
    h_factors: &[(u64, u32)],
) -> u128 {
    let mut exps: BTreeMap<u64, u32> = BTreeMap::new();
    for &(p, e) in n_factors {
        *exps.entry(p).or_insert(0) += e;
    }
    for &(p, e) in d_factors {
        *exps.entry(p).or_insert(0) += 2 * e;
    }
    for &(p, e) in h_factors {
        let cur = exps.entry(p).or_insert(0);
        *cur = (*cur).max(e);
    }
    let mut phi = 1u128;
    for (p, e) in exps {
        let p = p as u128;
        phi *= p.pow(e - 1) * (p - 1);
    }
    phi
}

/// Local factor at an odd prime of the main constant's direct Euler product,
/// with the 1/h prefactor distributed into the primes dividing h, so that
/// the full constant is (1/3) times the product over all odd primes.
pub fn main_local_factor(ell: u64, target: &CongruenceTarget) -> Result<ExactRational> {
    if target.h % ell == 0 {
        let alpha = multiplicity(target.h, ell);
        let la = (ell as i64).pow(alpha);
        disc_class_local_factor(ell, alpha, (target.canonical_r % la as u64) as i64)
    } else {
        disc_squarefree_local_factor(ell)
    }
}

/// Same local factor reached through the alternative route
/// P(r, h)/3 * prod_{p | h} (1 - (1 + (r|p))/p) * prod_{p not | h} (1 + G(p)/p),
/// again with this prime's share of 1/phi(h) folded in.
pub fn main_alt_local_factor(ell: u64, target: &CongruenceTarget) -> Result<ExactRational> {
    require_odd_prime(ell)?;
    let l = ell as i128;
    if target.h % ell == 0 {
        let alpha = multiplicity(target.h, ell);
        let chi = kronecker(target.r, ell as i64) as i128;
        Ok(trace_h_factor(ell, alpha, target) * rat(l - 1 - chi, l))
    } else {
        let g = g_factor(ell)?;
        Ok(trace_quartic_factor(ell) * (ExactRational::one() + g / rat(l, 1)))
    }
}

fn multiplicity(mut n: u64, p: u64) -> u32 {
    let mut a = 0;
    while n % p == 0 {
        n /= p;
        a += 1;
    }
    a
}

fn assemble_main(
    target: &CongruenceTarget,
    prime_cut: u64,
    local: impl Fn(u64, &CongruenceTarget) -> Result<ExactRational>,
) -> Result<EulerProductValue> {
    if prime_cut < 3 {
        return Err(Error::invalid("prime_cut must be >= 3".to_string()));
    }
    if !target.gcd_rh_squarefree {
        return Ok(EulerProductValue::vanishing(prime_cut));
    }
    let mut factors = BTreeMap::new();
    // Primes dividing h always contribute, even beyond the cut.
    let mut h = target.h;
    let mut p = 3u64;
    while h > 1 {
        while h % p != 0 {
            p += 2;
        }
        factors.insert(p, local(p, target)?);
        while h % p == 0 {
            h /= p;
        }
    }
    for &ell in sieve_primes(prime_cut)?.iter().skip(1) {
        if target.h % ell != 0 {
            factors.insert(ell, local(ell, target)?);
        }
    }
    Ok(EulerProductValue::assemble(rat(1, 3), factors, prime_cut))
}

/// The main constant 'c': (1/3h) times the product over odd primes of the
/// class-aware local densities. Predicts the census averages via c x/log x.
/// Returns the defined zero (with `vanishes` set) for an empty class.
pub fn main_constant(target: &CongruenceTarget, prime_cut: u64) -> Result<EulerProductValue> {
    assemble_main(target, prime_cut, main_local_factor)
}

/// The same constant assembled through the trace-constant route. Agrees with
/// `main_constant` factor by factor as exact rationals.
pub fn main_constant_alt(target: &CongruenceTarget, prime_cut: u64) -> Result<EulerProductValue> {
    assemble_main(target, prime_cut, main_alt_local_factor)
}
