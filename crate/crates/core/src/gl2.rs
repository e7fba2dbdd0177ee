//! Exhaustive counts over GL2(Z/l^beta Z) backing the local densities, and
//! the conjectural constants for a curve with full (generic) Galois image.
//!
//! Every count here enumerates all l^(4 beta) matrices mod l^beta with an
//! invertibility test, so the densities are independent oracles for the
//! closed forms in `constants`. `count_p1` counts matrices whose
//! discriminant tr^2 - 4 det is nonzero mod l^2, `count_p2` adds the
//! congruence condition mod l^alpha, and `count_order_squarefree_factor`
//! counts det - tr + 1 nonzero mod l^2, the local condition for the group
//! order p + 1 - a_p to be squarefree.
//!
//! `csf_generic` assembles the conjectural squarefree-discriminant constant
//! for a curve whose mod-m image is all of GL2: (1/h) times the jointly
//! enumerated probability at the primes dividing m, times the closed local
//! factors at the remaining primes. With m = 4 this reproduces the main
//! averaged constant exactly, factor for factor.

use crate::constants::{
    disc_class_local_factor, disc_squarefree_local_factor, factorize_odd, EulerProductValue,
};
use crate::error::{Error, Result};
use crate::modarith::{kronecker, sieve_primes, CongruenceTarget};
use crate::ExactRational;
use num_bigint::BigInt;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Largest enumeration modulus: keeps the matrix count below ~2.6e9.
pub const ENUM_MODULUS_MAX: u64 = 224;

/// Result of enumerating GL2(Z/l^beta Z) against a trace/det condition.
///
/// Invariants: `group_order` equals both the raw invertibility count and
/// the formula l^(4(beta-1)) (l^2 - 1)(l^2 - l); `density` is
/// `matching / group_order` in lowest terms.
#[derive(Debug, Clone)]
pub struct Gl2Count {
    pub ell: u64,
    pub beta: u32,
    pub matching: u64,
    pub group_order: u64,
    pub density: ExactRational,
}

/// Joint enumeration over GL2(Z/m Z) for composite m (the P(M_E) numerator
/// and denominator of the generic constant).
#[derive(Debug, Clone)]
pub struct Gl2JointCount {
    pub modulus: u64,
    pub matching: u64,
    pub group_order: u64,
}

impl Gl2JointCount {
    pub fn density(&self) -> ExactRational {
        ExactRational::new(
            BigInt::from(self.matching),
            BigInt::from(self.group_order),
        )
    }
}

/// |GL2(Z/m Z)| by the product formula over the prime powers of m.
fn gl2_order_formula(m: u64) -> u64 {
    let mut order = 1u64;
    for (l, beta) in factorize(m) {
        order *= l.pow(4 * (beta - 1)) * (l * l - 1) * (l * l - l);
    }
    order
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut e = 0;
    while n % 2 == 0 {
        n /= 2;
        e += 1;
    }
    if e > 0 {
        out.push((2, e));
    }
    out.extend(factorize_odd(n));
    out
}

/// Count all matrices mod m that are invertible, and those that additionally
/// satisfy `adm(trace, det)`. Literal sweep over all m^4 matrices, with the
/// (b, c) product table precomputed and the (trace, det) test hoisted out of
/// the two inner loops. Parallel over the first entry; merged by addition.
fn joint_count(m: u64, adm: impl Fn(u64, u64) -> bool + Sync) -> Result<(u64, u64)> {
    if m < 2 {
        return Err(Error::invalid("enumeration modulus must be >= 2".to_string()));
    }
    if m > ENUM_MODULUS_MAX {
        return Err(Error::resource(format!(
            "enumeration modulus {m} exceeds the budget cap {ENUM_MODULUS_MAX}"
        )));
    }
    let mu = m as usize;
    let unit: Vec<bool> = (0..m).map(|v| num_integer::gcd(v, m) == 1).collect();
    let bc: Vec<u32> = (0..mu * mu)
        .map(|i| ((i / mu) as u64 * (i % mu) as u64 % m) as u32)
        .collect();

    let (matching, order) = (0..mu)
        .into_par_iter()
        .map(|a| {
            // Per matrix, add one u64 carrying the invertibility count in the
            // low half and the matching count in the high half. Each `a` slice
            // contributes at most m^3 < 2^32 to either, so no carry crosses.
            let mut acc = 0u64;
            let mut code = vec![0u64; mu];
            for d in 0..mu {
                let t = ((a + d) as u64) % m;
                let ad = (a as u64 * d as u64 % m) as usize;
                for (det, c) in code.iter_mut().enumerate() {
                    *c = if unit[det] {
                        1 | ((adm(t, det as u64) as u64) << 32)
                    } else {
                        0
                    };
                }
                for b in 0..mu {
                    let row = &bc[b * mu..(b + 1) * mu];
                    for &bcr in row {
                        let v = ad + mu - bcr as usize;
                        let det = if v >= mu { v - mu } else { v };
                        acc += code[det];
                    }
                }
            }
            (acc >> 32, acc & 0xffff_ffff)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));

    let formula = gl2_order_formula(m);
    if order != formula {
        return Err(Error::invariant(format!(
            "invertible count mod {m} is {order}, group order formula gives {formula}"
        )));
    }
    Ok((matching, order))
}

fn require_odd_prime(ell: u64) -> Result<()> {
    if ell < 3 || ell % 2 == 0 || factorize_odd(ell).len() != 1 || factorize_odd(ell)[0].1 != 1 {
        return Err(Error::invalid(format!("{ell} is not an odd prime")));
    }
    Ok(())
}

fn enumerate_prime_power(
    ell: u64,
    beta: u32,
    adm: impl Fn(u64, u64) -> bool + Sync,
) -> Result<Gl2Count> {
    require_odd_prime(ell)?;
    let modulus = ell
        .checked_pow(beta)
        .filter(|&m| m <= ENUM_MODULUS_MAX)
        .ok_or_else(|| {
            Error::resource(format!(
                "modulus {ell}^{beta} exceeds the enumeration budget"
            ))
        })?;
    let (matching, group_order) = joint_count(modulus, adm)?;
    Ok(Gl2Count {
        ell,
        beta,
        matching,
        group_order,
        density: ExactRational::new(BigInt::from(matching), BigInt::from(group_order)),
    })
}

/// Density of g in GL2(Z/l^2) with tr(g)^2 - 4 det(g) nonzero mod l^2,
/// by enumeration. Errors if the result disagrees with the closed form.
pub fn count_p1(ell: u64) -> Result<Gl2Count> {
    let m = ell * ell;
    let count = enumerate_prime_power(ell, 2, |t, det| {
        (t * t + 4 * (m - det)) % m != 0
    })?;
    let closed = disc_squarefree_local_factor(ell)?;
    if count.density != closed {
        return Err(Error::invariant(format!(
            "enumerated density {} at l = {ell} differs from closed form {closed}",
            count.density
        )));
    }
    Ok(count)
}

/// Density of g in GL2(Z/l^beta), beta = max(alpha, 2), with discriminant
/// nonzero mod l^2 and congruent to r mod l^alpha, by enumeration. Errors
/// if the result disagrees with the closed form.
pub fn count_p2(ell: u64, alpha: u32, r: i64) -> Result<Gl2Count> {
    if alpha == 0 {
        return Err(Error::invalid("alpha must be >= 1".to_string()));
    }
    let beta = alpha.max(2);
    let m = ell
        .checked_pow(beta)
        .ok_or_else(|| Error::resource(format!("{ell}^{beta} overflows")))?;
    let l2 = ell * ell;
    let la = ell.pow(alpha);
    let rr = (r as i128).rem_euclid(la as i128) as u64;
    let count = enumerate_prime_power(ell, beta, |t, det| {
        let s = (t * t + 4 * (m - det)) % m;
        s % l2 != 0 && s % la == rr
    })?;
    let closed = disc_class_local_factor(ell, alpha, r)?;
    if count.density != closed {
        return Err(Error::invariant(format!(
            "enumerated density {} at l = {ell}, alpha = {alpha}, r = {r} differs from closed form {closed}",
            count.density
        )));
    }
    Ok(count)
}

/// Density of g in GL2(Z/l^2) with det(g) - tr(g) + 1 nonzero mod l^2, the
/// local squarefree condition on the group order p + 1 - a_p. Enumeration
/// only; the caller compares against `squarefree_order_local_factor` and
/// reports both sides.
pub fn count_order_squarefree_factor(ell: u64) -> Result<Gl2Count> {
    let m = ell * ell;
    enumerate_prime_power(ell, 2, |t, det| (det + (m - t) + 1) % m != 0)
}

/// The generic-image constant: (1/h) times the enumerated joint probability
/// at the primes dividing the even modulus m, times the closed per-prime
/// factors at the remaining odd primes up to `prime_cut` (the factors for
/// primes dividing h are always included). Returns the defined zero for an
/// empty class.
pub fn csf_generic(
    target: &CongruenceTarget,
    prime_cut: u64,
    m: u64,
) -> Result<EulerProductValue> {
    let joint = csf_joint_count(target, m)?;
    if !target.gcd_rh_squarefree {
        return Ok(EulerProductValue::vanishing(prime_cut));
    }
    if prime_cut < 3 {
        return Err(Error::invalid("prime_cut must be >= 3".to_string()));
    }
    let prefactor = ExactRational::new(
        BigInt::from(joint.matching),
        BigInt::from(joint.group_order) * BigInt::from(target.h),
    );
    let mut factors = BTreeMap::new();
    for (l, alpha) in factorize_odd(target.h) {
        if m % l != 0 {
            factors.insert(l, stripped_class_factor(l, alpha, target));
        }
    }
    for &l in sieve_primes(prime_cut)?.iter().skip(1) {
        if m % l != 0 && target.h % l != 0 {
            factors.insert(l, disc_squarefree_local_factor(l)?);
        }
    }
    Ok(EulerProductValue::assemble(prefactor, factors, prime_cut))
}

/// The local factor at an odd prime l | h of the generic constant, with the
/// 1/l^alpha share left inside the global 1/h prefactor.
fn stripped_class_factor(l: u64, alpha: u32, target: &CongruenceTarget) -> ExactRational {
    let chi = kronecker(target.r, l as i64) as i128;
    let li = l as i128;
    let rat = |n: i128, d: i128| ExactRational::new(BigInt::from(n), BigInt::from(d));
    if chi != 0 {
        rat(li * (li - 1 - chi), (li - 1) * (li - chi))
    } else if alpha == 1 {
        rat(li - 1, li)
    } else {
        // l || r with alpha >= 2: the whole branch is 1/l^alpha.
        rat(1, 1)
    }
}

/// The joint probability at the primes dividing m: matrices mod
/// prod l^max(2, v_l(m), v_l(h)) whose discriminant is nonzero mod l^2 for
/// every l | m and congruent to r mod l^v_l(h) for every l | gcd(m, h).
pub fn csf_joint_count(target: &CongruenceTarget, m: u64) -> Result<Gl2JointCount> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!(
            "the generic-image modulus must be even and >= 2, got {m}"
        )));
    }
    let mut m_star = 1u64;
    let mut conditions: Vec<(u64, u64, u64)> = Vec::new(); // (l^2, l^alpha, r mod l^alpha)
    for (l, gamma) in factorize(m) {
        let alpha = multiplicity(target.h, l);
        let beta = 2.max(gamma).max(alpha);
        let lb = l
            .checked_pow(beta)
            .filter(|&v| v <= ENUM_MODULUS_MAX)
            .and_then(|v| m_star.checked_mul(v).filter(|&w| w <= ENUM_MODULUS_MAX))
            .ok_or_else(|| {
                Error::resource(format!(
                    "joint modulus for m = {m} exceeds the budget cap {ENUM_MODULUS_MAX}"
                ))
            })?;
        m_star = lb;
        let la = l.pow(alpha);
        conditions.push((l * l, la, target.canonical_r % la));
    }
    let adm = |t: u64, det: u64| {
        let s = (t * t + 4 * (m_star - det)) % m_star;
        conditions
            .iter()
            .all(|&(l2, la, rr)| s % l2 != 0 && (la == 1 || s % la == rr))
    };
    let (matching, group_order) = joint_count(m_star, adm)?;
    Ok(Gl2JointCount {
        modulus: m_star,
        matching,
        group_order,
    })
}

fn multiplicity(mut n: u64, p: u64) -> u32 {
    let mut a = 0;
    while n % p == 0 {
        n /= p;
        a += 1;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{main_constant, squarefree_order_local_factor};
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> ExactRational {
        ExactRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn target(r: i64, h: u64) -> CongruenceTarget {
        CongruenceTarget::new(r, h).unwrap()
    }

    #[test]
    fn p1_enumeration_small_primes() {
        let c3 = count_p1(3).unwrap();
        assert_eq!((c3.matching, c3.group_order), (3294, 3888));
        assert_eq!(c3.density, rat(61, 72));
        assert_eq!(count_p1(5).unwrap().density, rat(571, 600));
        assert_eq!(count_p1(7).unwrap().density, rat(2297, 2352));
        assert!(count_p1(2).is_err());
        assert!(count_p1(17).is_err(), "17^2 = 289 exceeds the budget cap");
    }

    #[test]
    fn p2_enumeration_branches() {
        assert_eq!(count_p2(3, 1, 0).unwrap().density, rat(2, 9));
        assert_eq!(count_p2(3, 2, 3).unwrap().density, rat(1, 9));
        assert_eq!(count_p2(3, 2, 0).unwrap().density, rat(0, 1));
        assert_eq!(count_p2(3, 1, 1).unwrap().density, rat(1, 4));
        assert_eq!(count_p2(3, 1, 2).unwrap().density, rat(3, 8));
    }

    #[test]
    fn p2_residues_sum_to_p1() {
        for (ell, alpha) in [(3u64, 1u32), (3, 2), (5, 1)] {
            let mut sum = ExactRational::new(BigInt::from(0), BigInt::from(1));
            for r in 0..(ell as i64).pow(alpha) {
                sum += count_p2(ell, alpha, r).unwrap().density;
            }
            assert_eq!(sum, count_p1(ell).unwrap().density, "ell={ell} alpha={alpha}");
        }
    }

    #[test]
    fn order_factor_enumeration_vs_closed_form() {
        for ell in [3u64, 5, 7] {
            let count = count_order_squarefree_factor(ell).unwrap();
            let closed = squarefree_order_local_factor(ell).unwrap();
            assert_eq!(count.density, closed, "ell={ell}");
        }
        let c3 = count_order_squarefree_factor(3).unwrap();
        assert_eq!((c3.matching, c3.group_order), (3267, 3888));
    }

    #[test]
    fn trace_and_det_are_conjugation_invariant() {
        // The matching sets are cut out by trace and det alone, so closure
        // under conjugation reduces to tr and det being class functions.
        fn mat_mul(x: [u64; 4], y: [u64; 4], m: u64) -> [u64; 4] {
            [
                (x[0] * y[0] + x[1] * y[2]) % m,
                (x[0] * y[1] + x[1] * y[3]) % m,
                (x[2] * y[0] + x[3] * y[2]) % m,
                (x[2] * y[1] + x[3] * y[3]) % m,
            ]
        }
        let m = 9u64;
        let inv_scalar = |v: u64| (1..m).find(|&w| v * w % m == 1);
        proptest!(ProptestConfig::with_cases(200), |(g in prop::array::uniform4(0u64..9), u in prop::array::uniform4(0u64..9))| {
            let det_u = (u[0] * u[3] + m * m - u[1] * u[2]) % m;
            prop_assume!(num_integer::gcd(det_u, m) == 1);
            let di = inv_scalar(det_u).unwrap();
            let u_inv = [
                u[3] * di % m,
                (m * m - u[1] * di) % m,
                (m * m - u[2] * di) % m,
                u[0] * di % m,
            ];
            let conj = mat_mul(mat_mul(u, g, m), u_inv, m);
            let tr = |x: [u64; 4]| (x[0] + x[3]) % m;
            let det = |x: [u64; 4]| (x[0] * x[3] + m * m - x[1] * x[2]) % m;
            prop_assert_eq!(tr(conj), tr(g));
            prop_assert_eq!(det(conj), det(g));
        });
    }

    #[test]
    fn joint_count_mod_4_has_96_units() {
        let joint = csf_joint_count(&target(0, 1), 4).unwrap();
        assert_eq!(joint.modulus, 4);
        assert_eq!(joint.group_order, 96);
        // odd trace forces disc = 1 mod 4; exactly a third of the group
        assert_eq!(joint.matching, 32);
        assert_eq!(joint.density(), rat(1, 3));
    }

    #[test]
    fn generic_constant_with_m_4_matches_main_constant() {
        for (r, h) in [(0i64, 1u64), (2, 3), (4, 15)] {
            let tg = target(r, h);
            let csf = csf_generic(&tg, 500, 4).unwrap();
            let main = main_constant(&tg, 500).unwrap();
            assert_eq!(
                csf.exact_partial_product(),
                main.exact_partial_product(),
                "r={r} h={h}"
            );
        }
    }

    #[test]
    fn generic_constant_invariant_under_enlarging_m_coprime_to_h() {
        let tg = target(0, 1);
        let base = csf_generic(&tg, 300, 4).unwrap();
        let wider = csf_generic(&tg, 300, 20).unwrap();
        assert_eq!(base.exact_partial_product(), wider.exact_partial_product());
    }

    #[test]
    fn joint_count_splits_over_coprime_primes() {
        // P(36) for r = 2 mod 3 must be the product of the mod-4 and mod-9
        // densities: (1/3) * (3/8) = 1/8.
        let tg = target(2, 3);
        let joint = csf_joint_count(&tg, 12).unwrap();
        assert_eq!(joint.modulus, 36);
        assert_eq!(joint.density(), rat(1, 8));
    }

    #[test]
    fn csf_rejects_odd_modulus_and_vanishes_on_empty_class() {
        assert!(csf_generic(&target(0, 1), 100, 3).is_err());
        assert!(csf_generic(&target(0, 1), 100, 0).is_err());
        let v = csf_generic(&target(0, 9), 100, 4).unwrap();
        assert!(v.vanishes);
        assert_eq!(v.value, 0.0);
    }
}
