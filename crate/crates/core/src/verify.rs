//! Cross-check suites pairing each fast path with an independent oracle.
//!
//! Every suite runs a family of exact comparisons and returns a report:
//! whether all of them matched, how many individual checks ran, and detail
//! lines carrying the first counterexamples on failure. The CLI `verify`
//! subcommand maps reports to exit codes, and the crate's acceptance tests
//! run the same suites, so there is exactly one implementation of each
//! check.
//!
//! Infrastructure problems (budget overruns, invalid arguments, unreadable
//! tables) surface as errors; a comparison that ran and disagreed is a
//! failed report, never an error.

use crate::census::{census_from_histogram, deuring_census, direct_trace_histogram, DIRECT_ENUM_MAX};
use crate::classnum::ClassTable;
use crate::constants::{
    c_t_bruteforce, c_t_closed, c_t_factored, main_constant, main_constant_alt,
    squarefree_order_local_factor,
};
use crate::error::{Error, Result};
use crate::gl2::{count_order_squarefree_factor, count_p1, count_p2};
use crate::modarith::{sieve_primes, CongruenceTarget, SpfTable};
use crate::sums::{s_of_t, s_of_t_convergence, s_of_t_exact, s_of_t_literal, t_admissible, STConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub suite: &'static str,
    pub pass: bool,
    pub checks: u64,
    pub detail: Vec<String>,
}

const MAX_FAILURE_LINES: usize = 16;

impl VerifyReport {
    fn new(suite: &'static str) -> Self {
        VerifyReport {
            suite,
            pass: true,
            checks: 0,
            detail: Vec::new(),
        }
    }

    fn note(&mut self, msg: String) {
        self.detail.push(msg);
    }

    fn fail(&mut self, msg: String) {
        if self.failures() < MAX_FAILURE_LINES {
            self.detail.push(format!("FAIL {msg}"));
        }
        self.pass = false;
    }

    fn failures(&self) -> usize {
        self.detail.iter().filter(|l| l.starts_with("FAIL ")).count()
    }
}

/// The congruence classes exercised by the cross-check suites: the full
/// squarefree class, every class mod 3, and composite-modulus samples.
pub fn standard_targets() -> Vec<CongruenceTarget> {
    [(0i64, 1u64), (1, 3), (2, 3), (0, 3), (2, 5), (1, 15), (4, 15)]
        .into_iter()
        .map(|(r, h)| CongruenceTarget::new(r, h).expect("targets are valid"))
        .collect()
}

/// Deuring's count at curve level: for every prime 5 <= p <= pmax and every
/// trace t with t^2 < 4p, the number of nonsingular (a, b) with trace t
/// equals (p - 1) H(t^2 - 4p) exactly.
pub fn verify_deuring(pmax: u64) -> Result<VerifyReport> {
    if pmax < 5 {
        return Err(Error::invalid(format!("pmax must be >= 5, got {pmax}")));
    }
    if pmax > DIRECT_ENUM_MAX {
        return Err(Error::resource(format!(
            "direct enumeration is capped at p <= {DIRECT_ENUM_MAX}, got pmax = {pmax}"
        )));
    }
    let mut report = VerifyReport::new("deuring");
    let table = ClassTable::build(4 * pmax)?;
    let primes: Vec<u64> = sieve_primes(pmax)?.into_iter().filter(|&p| p >= 5).collect();
    let per_prime: Vec<(u64, Option<String>)> = primes
        .par_iter()
        .map(|&p| -> Result<(u64, Option<String>)> {
            let hist = direct_trace_histogram(p)?;
            let mut checks = 0;
            let mut failure = None;
            for t in -(p as i64)..=p as i64 {
                if t * t >= 4 * p as i64 {
                    continue;
                }
                let count = hist.get(&t).copied().unwrap_or(0);
                let expected = table.kronecker_class_number(t * t - 4 * p as i64)?
                    * BigRational::from(BigInt::from(p - 1));
                checks += 1;
                if BigRational::from(BigInt::from(count)) != expected && failure.is_none() {
                    failure = Some(format!(
                        "p={p} t={t}: {count} curves, (p-1)H(t^2-4p) = {expected}"
                    ));
                }
            }
            Ok((checks, failure))
        })
        .collect::<Result<Vec<_>>>()?;
    for (checks, failure) in per_prime {
        report.checks += checks;
        if let Some(msg) = failure {
            report.fail(msg);
        }
    }
    report.note(format!(
        "checked every trace count against (p-1)H for the {} primes in [5, {pmax}]",
        primes.len()
    ));
    Ok(report)
}

/// The two census methods agree: direct enumeration equals the class-number
/// count for every prime 5 <= p <= pmax and every given class.
pub fn verify_census_equivalence(
    pmax: u64,
    targets: &[CongruenceTarget],
) -> Result<VerifyReport> {
    if pmax < 5 {
        return Err(Error::invalid(format!("pmax must be >= 5, got {pmax}")));
    }
    if pmax > DIRECT_ENUM_MAX {
        return Err(Error::resource(format!(
            "direct enumeration is capped at p <= {DIRECT_ENUM_MAX}, got pmax = {pmax}"
        )));
    }
    let mut report = VerifyReport::new("census");
    let table = ClassTable::build(4 * pmax)?;
    let primes: Vec<u64> = sieve_primes(pmax)?.into_iter().filter(|&p| p >= 5).collect();
    let per_prime: Vec<(u64, Option<String>)> = primes
        .par_iter()
        .map(|&p| -> Result<(u64, Option<String>)> {
            let hist = direct_trace_histogram(p)?;
            let mut checks = 0;
            let mut failure = None;
            for target in targets {
                let direct = census_from_histogram(p, hist.clone(), target)?;
                let deuring = deuring_census(p, target, &table)?;
                checks += 1;
                if direct.pib != deuring.pib && failure.is_none() {
                    failure = Some(format!(
                        "p={p} class {target}: direct {} vs Deuring {}",
                        direct.pib, deuring.pib
                    ));
                }
            }
            Ok((checks, failure))
        })
        .collect::<Result<Vec<_>>>()?;
    for (checks, failure) in per_prime {
        report.checks += checks;
        if let Some(msg) = failure {
            report.fail(msg);
        }
    }
    report.note(format!(
        "compared both census methods at {} primes x {} classes",
        primes.len(),
        targets.len()
    ));
    Ok(report)
}

/// Largest factor allowed in the multiplicativity sweep of `verify_ct`.
const CT_PAIR_MAX: u64 = 200;

/// The character sum c_t(n): closed form equals the defining sum on every
/// odd prime power <= nmax, and the closed form composed multiplicatively
/// matches products of defining sums on coprime odd pairs up to
/// CT_PAIR_MAX each.
pub fn verify_ct(nmax: u64, tmax: u64, targets: &[CongruenceTarget]) -> Result<VerifyReport> {
    if nmax < 3 || tmax < 1 {
        return Err(Error::invalid(
            "verify_ct needs nmax >= 3 and tmax >= 1".to_string(),
        ));
    }
    let mut report = VerifyReport::new("ct");
    let spf = SpfTable::build(nmax.max(CT_PAIR_MAX * CT_PAIR_MAX))?;
    let primes: Vec<u64> = sieve_primes(nmax)?.into_iter().filter(|&p| p >= 3).collect();
    let odd_ts: Vec<i64> = (1..=tmax as i64).step_by(2).collect();
    for target in targets {
        for &t in &odd_ts {
            // At primes dividing h the closed form is only defined for
            // admissible t (gcd(t^2 - r, h) = 1); the sum drivers never ask
            // for more, so neither does the check.
            let admissible = t_admissible(t as u64, target);
            for &p in &primes {
                if target.h % p == 0 && !admissible {
                    continue;
                }
                let mut pj = p;
                let mut j = 1u32;
                while pj <= nmax {
                    let closed = c_t_closed(t, p, j, target)?;
                    let brute = c_t_bruteforce(t, pj, target);
                    report.checks += 1;
                    if closed != brute {
                        report.fail(format!(
                            "c_{t}({p}^{j}) mod class {target}: closed {closed}, sum {brute}"
                        ));
                    }
                    pj = match pj.checked_mul(p) {
                        Some(next) => next,
                        None => break,
                    };
                    j += 1;
                }
            }
            // multiplicativity: brute factors against the composed closed form
            let brute_small: Vec<i64> = (0..=CT_PAIR_MAX / 2)
                .map(|i| c_t_bruteforce(t, 2 * i + 1, target))
                .collect();
            for m in (3..=CT_PAIR_MAX).step_by(2) {
                for n in ((m + 2)..=CT_PAIR_MAX).step_by(2) {
                    if num_integer::gcd(m, n) != 1 {
                        continue;
                    }
                    if !admissible && num_integer::gcd(m * n, target.h) != 1 {
                        continue;
                    }
                    let product = brute_small[(m / 2) as usize] * brute_small[(n / 2) as usize];
                    let composed = c_t_factored(t, m * n, &spf, target)?;
                    report.checks += 1;
                    if product != composed {
                        report.fail(format!(
                            "c_{t}({m})c_{t}({n}) = {product} but c_{t}({}) = {composed} mod class {target}",
                            m * n
                        ));
                    }
                }
            }
        }
    }
    report.note(format!(
        "closed form vs defining sum on odd prime powers <= {nmax}, odd t <= {tmax}, {} classes (admissible t only where gcd(n, h) > 1), plus coprime products <= {CT_PAIR_MAX}",
        targets.len()
    ));
    Ok(report)
}

/// The two Euler-product routes to the main constant agree factor by factor
/// as exact rationals at every odd prime <= prime_cut.
pub fn verify_constant_identity(
    prime_cut: u64,
    targets: &[CongruenceTarget],
) -> Result<VerifyReport> {
    let mut report = VerifyReport::new("constant-identity");
    for target in targets {
        let a = main_constant(target, prime_cut)?;
        let b = main_constant_alt(target, prime_cut)?;
        report.checks += 1;
        if a.prefactor != b.prefactor {
            report.fail(format!(
                "class {target}: prefactors differ, {} vs {}",
                a.prefactor, b.prefactor
            ));
        }
        report.checks += 1;
        if a.factors.keys().ne(b.factors.keys()) {
            report.fail(format!(
                "class {target}: the routes cover different primes ({} vs {})",
                a.factors.len(),
                b.factors.len()
            ));
            continue;
        }
        let mut mismatch = false;
        for (ell, fa) in &a.factors {
            let fb = &b.factors[ell];
            report.checks += 1;
            if fa != fb {
                report.fail(format!(
                    "class {target}, l = {ell}: squarefree route {fa}, trace route {fb}"
                ));
                mismatch = true;
                break;
            }
        }
        report.checks += 1;
        if !mismatch && a.value.to_bits() != b.value.to_bits() {
            report.fail(format!(
                "class {target}: factors agree but assembled values differ, {} vs {}",
                a.value, b.value
            ));
        }
        if !mismatch {
            report.note(format!(
                "class {target}: {} local factors agree exactly, value {}",
                a.factors.len(),
                a.value
            ));
        }
    }
    Ok(report)
}

/// Matrix densities: enumerations over GL2(Z/l^2) match every closed form,
/// class probabilities sum to the squarefree probability, and the
/// order-squarefree factor is compared against its closed form explicitly.
pub fn verify_gl2(ells: &[u64]) -> Result<VerifyReport> {
    let mut report = VerifyReport::new("gl2");
    for &ell in ells {
        let p1 = match count_p1(ell) {
            Ok(count) => count,
            Err(Error::Invariant(msg)) => {
                report.checks += 1;
                report.fail(msg);
                continue;
            }
            Err(e) => return Err(e),
        };
        report.checks += 1;
        report.note(format!(
            "P1({ell}) = {}/{} confirmed by enumeration",
            p1.matching, p1.group_order
        ));

        // P2 over every class r mod l: same modulus l^2, so the matching
        // counts must add up to the P1 count exactly.
        let mut total = 0u64;
        let mut sweep_ok = true;
        for r in 0..ell as i64 {
            match count_p2(ell, 1, r) {
                Ok(count) => {
                    report.checks += 1;
                    total += count.matching;
                }
                Err(Error::Invariant(msg)) => {
                    report.checks += 1;
                    report.fail(msg);
                    sweep_ok = false;
                }
                Err(e) => return Err(e),
            }
        }
        report.checks += 1;
        if sweep_ok && total != p1.matching {
            report.fail(format!(
                "sum over r mod {ell} of P2 counts is {total}, P1 count is {}",
                p1.matching
            ));
        }

        // depth-two branches: l exactly dividing r, and the vanishing l^2 | r
        for (r, what) in [(ell as i64, "l || r"), (0, "l^2 | r")] {
            match count_p2(ell, 2, r) {
                Ok(count) => {
                    report.checks += 1;
                    report.note(format!(
                        "P2({ell}, alpha=2, r={r}) [{what}] = {}",
                        count.density
                    ));
                }
                Err(Error::Invariant(msg)) => {
                    report.checks += 1;
                    report.fail(msg);
                }
                Err(e) => return Err(e),
            }
        }

        let order = count_order_squarefree_factor(ell)?;
        let closed = squarefree_order_local_factor(ell)?;
        report.checks += 1;
        if order.density == closed {
            report.note(format!(
                "order-squarefree factor at {ell}: enumeration {} matches the closed form",
                order.density
            ));
        } else {
            report.fail(format!(
                "order-squarefree factor at {ell}: enumeration {}, closed form {closed}",
                order.density
            ));
        }
    }

    // every branch shape at l = 3, full sweep at depth two included
    if ells.contains(&3) {
        let p1 = count_p1(3)?;
        let mut total = 0u64;
        for r in 0..9 {
            let count = match count_p2(3, 2, r) {
                Ok(count) => count,
                Err(Error::Invariant(msg)) => {
                    report.checks += 1;
                    report.fail(msg);
                    continue;
                }
                Err(e) => return Err(e),
            };
            report.checks += 1;
            total += count.matching;
        }
        report.checks += 1;
        if total != p1.matching {
            report.fail(format!(
                "sum over r mod 9 of P2(3, 2, r) counts is {total}, P1 count is {}",
                p1.matching
            ));
        }
    }
    Ok(report)
}

/// S(T)/T approaches (3/2) times the main constant as the truncation R
/// grows, and the fast, exact, and literal evaluations agree on small
/// instances.
pub fn verify_st(t_max: u64, r_list: &[u64], prime_cut: u64) -> Result<VerifyReport> {
    if r_list.len() < 2 {
        return Err(Error::invalid(
            "convergence needs at least two R values".to_string(),
        ));
    }
    let mut report = VerifyReport::new("st");
    let target = CongruenceTarget::new(0, 1)?;
    let rows = s_of_t_convergence(t_max, &target, r_list, prime_cut)?;
    for row in &rows {
        report.note(format!(
            "T={t_max} R={} U={}: S(T)/T = {:.9}, limit {:.9}, deviation {:.2e}",
            row.r_max,
            row.u_max,
            row.s_over_t,
            row.predicted,
            (row.s_over_t - row.predicted).abs()
        ));
    }
    for pair in rows.windows(2) {
        let before = (pair[0].s_over_t - pair[0].predicted).abs();
        let after = (pair[1].s_over_t - pair[1].predicted).abs();
        report.checks += 1;
        if after >= before {
            report.fail(format!(
                "deviation grew from {before:.3e} (R={}) to {after:.3e} (R={})",
                pair[0].r_max, pair[1].r_max
            ));
        }
    }

    for (r, h) in [(0i64, 1u64), (2, 3), (0, 3)] {
        let small = CongruenceTarget::new(r, h)?;
        let config = STConfig::new(15, 45, 5, small)?;
        let exact = s_of_t_exact(&config)?;
        let literal = s_of_t_literal(&config)?;
        report.checks += 1;
        if exact != literal {
            report.fail(format!(
                "small instance T=15 class {r} mod {h}: exact {exact} vs literal {literal}"
            ));
        }
        let fast = s_of_t(&config)?;
        let exact_f = exact.to_f64().unwrap_or(f64::NAN);
        report.checks += 1;
        if !((fast - exact_f).abs() <= 1e-12 * (1.0 + exact_f.abs())) {
            report.fail(format!(
                "small instance T=15 class {r} mod {h}: fast {fast} vs exact {exact_f}"
            ));
        }
    }
    Ok(report)
}
