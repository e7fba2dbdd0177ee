//! The truncated sum S(T) over odd traces t <= T of the character-sum
//! approximation to the trace constants, and its convergence toward
//! (3/2) times the main constant.
//!
//! S(T) = sum over odd t <= T with gcd(t^2 - r, h) = 1 of
//!        sum over odd n <= U of c_t(n)/n times
//!        sum over odd squarefree d <= R, gcd(d, nt) = 1, gcd(d^2, h) | r,
//!        of mu(d) / phi(lcm(n d^2, h)).
//!
//! Three routes are implemented. `s_of_t` is the production float path: it
//! splits n and d into their h-smooth and h-coprime parts, groups the
//! h-coprime part by the set of primes <= R dividing n, and caches per-trace
//! results by the squarefree kernel of t, which is all c_t depends on.
//! `s_of_t_exact` evaluates the same truncated sum in exact rational
//! arithmetic with the closed-form c_t. `s_of_t_literal` is the independent
//! oracle: explicit alpha loops for c_t, Moebius by trial division, and
//! totients by counting coprime residues. Exact and literal agree exactly on
//! small configurations, and the float path agrees to rounding error.

use crate::constants::{c_t_factored, factorize_odd, main_constant, phi_of_lcm};
use crate::error::{Error, Result};
use crate::modarith::{moebius, CongruenceTarget, SpfTable};
use crate::{ExactRational, KahanSum};
use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use std::collections::HashMap;

/// Budget caps for the float path.
pub const T_MAX_LIMIT: u64 = 1 << 20;
pub const U_MAX_LIMIT: u64 = 2_000_000;
pub const R_MAX_LIMIT: u64 = 300;

/// Truncation parameters for one S(T) evaluation.
///
/// `u_max` truncates the n sum, `r_max` the d sum. The convergence driver
/// ties them together as u_max = floor(sqrt(t_max) * r_max^2), mirroring the
/// truncation the error analysis is stated for; `new` accepts any shape.
#[derive(Debug, Clone)]
pub struct STConfig {
    pub t_max: u64,
    pub u_max: u64,
    pub r_max: u64,
    pub target: CongruenceTarget,
}

impl STConfig {
    pub fn new(t_max: u64, u_max: u64, r_max: u64, target: CongruenceTarget) -> Result<Self> {
        if u_max < 1 || r_max < 1 {
            return Err(Error::invalid("u_max and r_max must be >= 1".to_string()));
        }
        if t_max > T_MAX_LIMIT || u_max > U_MAX_LIMIT || r_max > R_MAX_LIMIT {
            return Err(Error::resource(format!(
                "S(T) budget exceeded: t_max <= {T_MAX_LIMIT}, u_max <= {U_MAX_LIMIT}, r_max <= {R_MAX_LIMIT}"
            )));
        }
        Ok(STConfig {
            t_max,
            u_max,
            r_max,
            target,
        })
    }

    /// The standard truncation u_max = floor(sqrt(t_max) * r_max^2).
    pub fn with_standard_u(t_max: u64, r_max: u64, target: CongruenceTarget) -> Result<Self> {
        if t_max < 1 {
            return Err(Error::invalid("t_max must be >= 1".to_string()));
        }
        let u = ((t_max as f64).sqrt() * (r_max * r_max) as f64).floor() as u64;
        STConfig::new(t_max, u.max(1), r_max, target)
    }
}

pub(crate) fn t_admissible(t: u64, target: &CongruenceTarget) -> bool {
    let t2r = (t as i128) * (t as i128) - target.r as i128;
    num_integer::gcd(t2r.unsigned_abs() % target.h as u128, target.h as u128) == 1
}

/// All products of the primes of h that stay <= bound, ascending. For h = 1
/// this is just [1].
fn h_smooth_numbers(h: u64, bound: u64) -> Vec<u64> {
    let primes: Vec<u64> = factorize_odd(h).into_iter().map(|(p, _)| p).collect();
    let mut out = vec![1u64];
    for &p in &primes {
        let mut grown = Vec::new();
        for &v in &out {
            let mut w = v;
            while w <= bound / p {
                w *= p;
                grown.push(w);
            }
        }
        out.extend(grown);
    }
    out.sort_unstable();
    out
}

/// Squarefree products of the primes of h that stay <= bound and satisfy
/// gcd(d^2, h) | r, each with its Moebius sign.
fn h_smooth_d_parts(target: &CongruenceTarget, bound: u64) -> Vec<(u64, f64)> {
    let primes: Vec<u64> = factorize_odd(target.h)
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let mut out = vec![(1u64, 1.0f64)];
    for &p in &primes {
        let mut grown = Vec::new();
        for &(v, mu) in &out {
            if v <= bound / p {
                grown.push((v * p, -mu));
            }
        }
        out.extend(grown);
    }
    out.retain(|&(d, _)| {
        let g = num_integer::gcd(d * d, target.h);
        target.canonical_r % g == 0
    });
    out.sort_unstable_by_key(|&(d, _)| d);
    out
}

const SKIP: u32 = u32::MAX;

/// Precomputed tables for the float path, shared read-only across workers.
struct SumTables {
    target: CongruenceTarget,
    u_max: u64,
    r_max: u64,
    spf: SpfTable,
    /// q[i] = c_gen(n) / (n phi(n)) for n = 2i + 1 coprime to h, where c_gen
    /// uses the generic (p not dividing t) prime-power values.
    q: Vec<f64>,
    /// Mask id of n = 2i + 1, or SKIP when gcd(n, h) > 1.
    mid: Vec<u32>,
    /// id -> set of primes <= r_max dividing n, as bits.
    masks: Vec<u64>,
    /// Bit index of each odd prime <= r_max not dividing h; 255 otherwise.
    bit_of_prime: Vec<u8>,
    /// Ascending h-smooth n_h with the snapshot index for n' <= u_max / n_h.
    nh: Vec<(u64, usize)>,
    /// Per distinct n' bound: that bound, and the sparse (id, sum of q) list
    /// over n' up to it.
    snapshots: Vec<(u64, Vec<(u32, f64)>)>,
    /// h-smooth d_h with Moebius sign and, per n_h index, 1/phi(lcm(n_h d_h^2, h))
    /// (0.0 marks gcd(n_h, d_h) > 1).
    dh: Vec<(u64, f64, Vec<f64>)>,
    /// Admissible h-coprime d' <= r_max / d_h, as (prime mask, mu/(d phi(d))),
    /// aligned with `dh`.
    dlists: Vec<Vec<(u64, f64)>>,
}

fn freeze(running: &[(f64, u64)]) -> Vec<(u32, f64)> {
    running
        .iter()
        .enumerate()
        .filter(|&(_, &(_, count))| count > 0)
        .map(|(id, &(sum, _))| (id as u32, sum))
        .collect()
}

impl SumTables {
    fn build(config: &STConfig) -> Result<SumTables> {
        let target = config.target.clone();
        let h = target.h;
        let u_max = config.u_max;
        let r_max = config.r_max;
        let spf = SpfTable::build(u_max.max(r_max).max(h).max(config.t_max).max(3))?;

        let mut bit_of_prime = vec![255u8; r_max as usize + 1];
        let mut bits: u8 = 0;
        for p in (3..=r_max).step_by(2) {
            if spf.smallest_prime_factor(p) as u64 == p && h % p != 0 {
                bit_of_prime[p as usize] = bits;
                bits += 1;
            }
        }

        let nh_values = h_smooth_numbers(h, u_max);
        if nh_values.len() > 4096 {
            return Err(Error::resource(
                "too many h-smooth parts; lower u_max or simplify h".to_string(),
            ));
        }
        let mut bounds: Vec<u64> = nh_values.iter().map(|&v| u_max / v).collect();
        bounds.sort_unstable();
        bounds.dedup();
        let nh: Vec<(u64, usize)> = nh_values
            .iter()
            .map(|&v| {
                let b = u_max / v;
                (v, bounds.binary_search(&b).expect("bound present"))
            })
            .collect();

        // One ascending scan over odd n builds q, the mask ids, and the
        // per-bound sparse snapshots of sum-of-q grouped by mask.
        let len = u_max.div_ceil(2) as usize;
        let mut q = vec![0.0f64; len];
        let mut mid = vec![SKIP; len];
        let mut masks: Vec<u64> = Vec::new();
        let mut id_of_mask: HashMap<u64, u32> = HashMap::new();
        let mut running: Vec<(f64, u64)> = Vec::new();
        let mut snapshots: Vec<(u64, Vec<(u32, f64)>)> = Vec::with_capacity(bounds.len());
        let mut next_bound = 0usize;
        for i in 0..len {
            let n = 2 * i as u64 + 1;
            while next_bound < bounds.len() && bounds[next_bound] < n {
                snapshots.push((bounds[next_bound], freeze(&running)));
                next_bound += 1;
            }
            let mut m = n;
            let mut c: i64 = 1;
            let mut phi: u64 = 1;
            let mut mask = 0u64;
            let mut coprime_h = true;
            while m > 1 {
                let p = spf.smallest_prime_factor(m) as u64;
                if h % p == 0 {
                    coprime_h = false;
                    break;
                }
                let mut pj = 1u64;
                let mut j = 0u32;
                while m % p == 0 {
                    m /= p;
                    pj *= p;
                    j += 1;
                }
                let pj1 = (pj / p) as i64;
                phi *= pj - pj / p;
                c *= if j % 2 == 1 {
                    -pj1
                } else {
                    pj as i64 - 2 * pj1
                };
                if p <= r_max {
                    let bit = bit_of_prime[p as usize];
                    debug_assert_ne!(bit, 255);
                    mask |= 1u64 << bit;
                }
            }
            if !coprime_h {
                continue;
            }
            let id = *id_of_mask.entry(mask).or_insert_with(|| {
                masks.push(mask);
                running.push((0.0, 0));
                (masks.len() - 1) as u32
            });
            let qv = c as f64 / (n as f64 * phi as f64);
            q[i] = qv;
            mid[i] = id;
            running[id as usize].0 += qv;
            running[id as usize].1 += 1;
        }
        while next_bound < bounds.len() {
            snapshots.push((bounds[next_bound], freeze(&running)));
            next_bound += 1;
        }

        // h-smooth d parts, their phi factors against each n_h, and the
        // h-coprime d' lists under each reduced bound r_max / d_h.
        let h_factors = factorize_odd(h);
        let dh_parts = h_smooth_d_parts(&target, r_max);
        let mut dh = Vec::with_capacity(dh_parts.len());
        let mut dlists = Vec::with_capacity(dh_parts.len());
        for &(d_h, mu) in &dh_parts {
            let mut inv_phi = Vec::with_capacity(nh.len());
            for &(n_h, _) in &nh {
                if num_integer::gcd(n_h, d_h) != 1 {
                    inv_phi.push(0.0);
                } else {
                    let phi = phi_of_lcm(
                        &factorize_odd(n_h),
                        &factorize_odd(d_h),
                        &h_factors,
                    );
                    inv_phi.push(1.0 / phi as f64);
                }
            }
            dh.push((d_h, mu, inv_phi));

            let r_prime = r_max / d_h;
            let mut dlist = Vec::new();
            let mut d = 1u64;
            while d <= r_prime {
                if num_integer::gcd(d, h) == 1 && spf.moebius(d) != 0 {
                    let mut dmask = 0u64;
                    for (p, _) in spf.factorize(d) {
                        dmask |= 1u64 << bit_of_prime[p as usize];
                    }
                    let w = spf.moebius(d) as f64 / (d * spf.euler_phi(d)) as f64;
                    dlist.push((dmask, w));
                }
                d += 2;
            }
            dlists.push(dlist);
        }

        Ok(SumTables {
            target,
            u_max,
            r_max,
            spf,
            q,
            mid,
            masks,
            bit_of_prime,
            nh,
            snapshots,
            dh,
            dlists,
        })
    }
}

/// Per-worker scratch state for the float path.
struct Worker<'a> {
    tables: &'a SumTables,
    flags: Vec<bool>,
    touched: Vec<u32>,
    corr: Vec<f64>,
    corr_touched: Vec<u32>,
    e_memo: Vec<HashMap<u64, f64>>,
    rad_memo: HashMap<u64, f64>,
}

impl<'a> Worker<'a> {
    fn new(tables: &'a SumTables) -> Worker<'a> {
        Worker {
            tables,
            flags: vec![false; tables.q.len()],
            touched: Vec::new(),
            corr: vec![0.0; tables.masks.len()],
            corr_touched: Vec::new(),
            e_memo: vec![HashMap::new(); tables.dh.len()],
            rad_memo: HashMap::new(),
        }
    }

    /// Inner d' sum for one d_h bucket and one union mask: the sum of
    /// mu(d')/(d' phi(d')) over admissible d' coprime to the masked primes.
    fn e_value(&mut self, dh_idx: usize, mask: u64) -> f64 {
        if let Some(&v) = self.e_memo[dh_idx].get(&mask) {
            return v;
        }
        let v = self.tables.dlists[dh_idx]
            .iter()
            .filter(|&&(dmask, _)| dmask & mask == 0)
            .map(|&(_, w)| w)
            .sum();
        self.e_memo[dh_idx].insert(mask, v);
        v
    }

    /// The full t-th term of S(T), caching by the squarefree kernel of t.
    fn eval_t(&mut self, t: u64) -> Result<f64> {
        let tables = self.tables;
        let target = &tables.target;
        if !t_admissible(t, target) {
            return Ok(0.0);
        }
        let t_factors = tables.spf.factorize(t);
        let key_bound = tables.u_max.max(tables.r_max);
        let rad: u64 = t_factors
            .iter()
            .map(|&(p, _)| p)
            .filter(|&p| p <= key_bound)
            .product();
        if let Some(&v) = self.rad_memo.get(&rad) {
            return Ok(v);
        }

        let mut tmask = 0u64;
        // Primes of t away from h, with the generic-to-even correction ratio
        // (p - 1)/(p - 2) applied when v_p(n) is even.
        let mut tp_corr: Vec<(u64, f64)> = Vec::new();
        for &(p, _) in &t_factors {
            if target.h % p == 0 {
                continue;
            }
            if p <= tables.r_max && tables.bit_of_prime[p as usize] != 255 {
                tmask |= 1u64 << tables.bit_of_prime[p as usize];
            }
            tp_corr.push((p, (p - 1) as f64 / (p - 2) as f64));
        }

        let mut total = 0.0f64;
        for (k, &(n_h, snap_idx)) in tables.nh.iter().enumerate() {
            let c_nh = c_t_factored(t as i64, n_h, &tables.spf, target)?;
            if c_nh == 0 {
                continue;
            }
            let (u_prime, ref snap) = tables.snapshots[snap_idx];

            // Overlay the difference between c_t and c_gen for n' sharing a
            // prime with t: zero when some v_p(n') is odd, scaled by the
            // even-exponent ratio otherwise.
            for &(p, _) in &tp_corr {
                if p > u_prime {
                    continue;
                }
                let mut n = p;
                while n <= u_prime {
                    let i = ((n - 1) / 2) as usize;
                    if tables.mid[i] != SKIP && !self.flags[i] {
                        self.flags[i] = true;
                        self.touched.push(i as u32);
                        let mut ratio = 1.0f64;
                        for &(tp, re) in &tp_corr {
                            if n % tp == 0 {
                                let mut m = n / tp;
                                let mut v = 1u32;
                                while m % tp == 0 {
                                    m /= tp;
                                    v += 1;
                                }
                                if v % 2 == 1 {
                                    ratio = 0.0;
                                    break;
                                }
                                ratio *= re;
                            }
                        }
                        let delta = tables.q[i] * (ratio - 1.0);
                        if delta != 0.0 {
                            let id = tables.mid[i] as usize;
                            self.corr[id] += delta;
                            self.corr_touched.push(id as u32);
                        }
                    }
                    n += 2 * p;
                }
            }

            let scale = c_nh as f64 / n_h as f64;
            for dh_idx in 0..tables.dh.len() {
                let (d_h, mu, ref inv_phi) = tables.dh[dh_idx];
                if num_integer::gcd(d_h, rad) != 1 || inv_phi[k] == 0.0 {
                    continue;
                }
                let mut inner = 0.0f64;
                for &(id, qsum) in snap.iter() {
                    let v = qsum + self.corr[id as usize];
                    if v != 0.0 {
                        inner += v * self.e_value(dh_idx, tables.masks[id as usize] | tmask);
                    }
                }
                total += scale * mu * inv_phi[k] * inner;
            }

            for id in self.corr_touched.drain(..) {
                self.corr[id as usize] = 0.0;
            }
            for i in self.touched.drain(..) {
                self.flags[i as usize] = false;
            }
        }
        self.rad_memo.insert(rad, total);
        Ok(total)
    }
}

/// Per-trace contributions to S(T), one entry per odd t = 1, 3, ..., in
/// ascending order (inadmissible traces contribute 0). S(T) is their sum;
/// exposing the terms makes the additivity of S in T directly testable.
pub fn s_of_t_terms(config: &STConfig) -> Result<Vec<f64>> {
    let tables = SumTables::build(config)?;
    let ts: Vec<u64> = (1..=config.t_max).step_by(2).collect();
    let chunks: Vec<&[u64]> = ts.chunks(512).collect();
    let per_chunk: Vec<Vec<f64>> = chunks
        .into_par_iter()
        .map(|chunk| {
            let mut worker = Worker::new(&tables);
            chunk.iter().map(|&t| worker.eval_t(t)).collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

/// S(T) by the production float path. Deterministic: per-trace terms are
/// computed independently and added in ascending order with compensation.
pub fn s_of_t(config: &STConfig) -> Result<f64> {
    let mut sum = KahanSum::default();
    for term in s_of_t_terms(config)? {
        sum.add(term);
    }
    Ok(sum.value())
}

fn exact_term_budget(config: &STConfig, cap: u64) -> Result<()> {
    let terms = (config.t_max / 2 + 1)
        .saturating_mul(config.u_max / 2 + 1)
        .saturating_mul(config.r_max / 2 + 1);
    if terms > cap {
        return Err(Error::resource(format!(
            "exact S(T) budget exceeded: {terms} terms, cap {cap}"
        )));
    }
    Ok(())
}

/// S(T) as an exact rational, using the closed-form multiplicative c_t.
/// Intended for small configurations; the term count is capped.
pub fn s_of_t_exact(config: &STConfig) -> Result<ExactRational> {
    exact_term_budget(config, 2_000_000)?;
    let target = &config.target;
    let spf = SpfTable::build(config.u_max.max(config.r_max).max(target.h).max(3))?;
    let h_factors = factorize_odd(target.h);
    let mut sum = ExactRational::zero();
    for t in (1..=config.t_max).step_by(2) {
        if !t_admissible(t, target) {
            continue;
        }
        for n in (1..=config.u_max).step_by(2) {
            let c = c_t_factored(t as i64, n, &spf, target)?;
            if c == 0 {
                continue;
            }
            let n_factors = spf.factorize(n);
            for d in (1..=config.r_max).step_by(2) {
                if spf.moebius(d) == 0
                    || num_integer::gcd(d, n) != 1
                    || num_integer::gcd(d, t) != 1
                    || target.canonical_r % num_integer::gcd(d * d, target.h) != 0
                {
                    continue;
                }
                let phi = phi_of_lcm(&n_factors, &spf.factorize(d), &h_factors);
                let num = BigInt::from(c) * BigInt::from(spf.moebius(d));
                let den = BigInt::from(n) * BigInt::from(phi);
                sum += ExactRational::new(num, den);
            }
        }
    }
    Ok(sum)
}

fn phi_by_counting(m: u64) -> u64 {
    (1..=m).filter(|&k| num_integer::gcd(k, m) == 1).count() as u64
}

/// The letter-by-letter oracle for S(T): c_t by its defining alpha loop,
/// Moebius by trial division, and every totient by counting coprime
/// residues. Exponentially honest and correspondingly slow; tightly capped.
pub fn s_of_t_literal(config: &STConfig) -> Result<ExactRational> {
    exact_term_budget(config, 50_000)?;
    let target = &config.target;
    let mut sum = ExactRational::zero();
    for t in (1..=config.t_max).step_by(2) {
        if !t_admissible(t, target) {
            continue;
        }
        for n in (1..=config.u_max).step_by(2) {
            let c = crate::constants::c_t_bruteforce(t as i64, n, target);
            if c == 0 {
                continue;
            }
            for d in (1..=config.r_max).step_by(2) {
                if moebius(d) == 0
                    || num_integer::gcd(d, n * t) != 1
                    || target.canonical_r % num_integer::gcd(d * d, target.h) != 0
                {
                    continue;
                }
                let nd2 = (n as u128) * (d as u128) * (d as u128);
                let l = num_integer::lcm(nd2, target.h as u128);
                if l > 1_000_000 {
                    return Err(Error::resource(format!(
                        "literal S(T) totient modulus {l} too large"
                    )));
                }
                let phi = phi_by_counting(l as u64);
                let num = BigInt::from(c) * BigInt::from(moebius(d));
                let den = BigInt::from(n) * BigInt::from(phi);
                sum += ExactRational::new(num, den);
            }
        }
    }
    Ok(sum)
}

/// One row of the convergence table: S(T)/T against the predicted limit at
/// a given d-sum truncation.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub r_max: u64,
    pub u_max: u64,
    pub s_over_t: f64,
    pub predicted: f64,
}

/// Evaluate S(T)/T at each truncation R in `r_list` (with the standard
/// U = floor(sqrt(T)) R^2 coupling) against (3/2) times the main constant.
/// The deviation should shrink as R grows, the error being O(log R / R).
pub fn s_of_t_convergence(
    t_max: u64,
    target: &CongruenceTarget,
    r_list: &[u64],
    prime_cut: u64,
) -> Result<Vec<ConvergenceRow>> {
    if t_max < 1 {
        return Err(Error::invalid("t_max must be >= 1".to_string()));
    }
    let constant = main_constant(target, prime_cut)?;
    let predicted = 1.5 * constant.value;
    let mut rows = Vec::with_capacity(r_list.len());
    for &r_max in r_list {
        let config = STConfig::with_standard_u(t_max, r_max, target.clone())?;
        let s = s_of_t(&config)?;
        rows.push(ConvergenceRow {
            r_max,
            u_max: config.u_max,
            s_over_t: s / t_max as f64,
            predicted,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::euler_phi;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn target(r: i64, h: u64) -> CongruenceTarget {
        CongruenceTarget::new(r, h).unwrap()
    }

    fn config(t: u64, u: u64, r: u64, tg: CongruenceTarget) -> STConfig {
        STConfig::new(t, u, r, tg).unwrap()
    }

    #[test]
    fn empty_range_is_zero() {
        let cfg = config(0, 15, 3, target(0, 1));
        assert_eq!(s_of_t(&cfg).unwrap(), 0.0);
        assert_eq!(s_of_t_exact(&cfg).unwrap(), ExactRational::zero());
    }

    #[test]
    fn exact_equals_literal_on_small_configs() {
        for (r, h) in [(0i64, 1u64), (2, 3), (1, 3), (0, 3)] {
            for (t, u, rr) in [(9u64, 15u64, 3u64), (15, 45, 5), (15, 44, 4)] {
                let cfg = config(t, u, rr, target(r, h));
                let exact = s_of_t_exact(&cfg).unwrap();
                let literal = s_of_t_literal(&cfg).unwrap();
                assert_eq!(exact, literal, "T={t} U={u} R={rr} r={r} h={h}");
            }
        }
    }

    #[test]
    fn float_path_matches_exact_on_small_configs() {
        for (r, h) in [(0i64, 1u64), (2, 3), (1, 3), (0, 3), (4, 15)] {
            for (t, u, rr) in [(9u64, 15u64, 3u64), (15, 45, 5), (25, 200, 7)] {
                let cfg = config(t, u, rr, target(r, h));
                let fast = s_of_t(&cfg).unwrap();
                let exact = s_of_t_exact(&cfg).unwrap().to_f64().unwrap();
                assert!(
                    (fast - exact).abs() <= 1e-12 * (1.0 + exact.abs()),
                    "T={t} U={u} R={rr} r={r} h={h}: fast {fast}, exact {exact}"
                );
            }
        }
    }

    #[test]
    fn terms_are_additive_prefixes() {
        let tg = target(2, 3);
        let long = config(31, 120, 5, tg.clone());
        let short = config(19, 120, 5, tg);
        let terms = s_of_t_terms(&long).unwrap();
        let mut prefix = KahanSum::default();
        for &v in &terms[..10] {
            prefix.add(v);
        }
        assert_eq!(prefix.value(), s_of_t(&short).unwrap());
    }

    #[test]
    fn totient_of_lcm_matches_gcd_split() {
        // phi(lcm(n d^2, h)) = phi(n) phi(d^2) phi(h) / (phi((n,h)) phi((d^2,h)))
        // for coprime n, d.
        proptest!(ProptestConfig::with_cases(300), |(a in 0u64..60, b in 0u64..20, h0 in 0u64..30)| {
            let n = 2 * a + 1;
            let d = 2 * b + 1;
            let h = 2 * h0 + 1;
            prop_assume!(num_integer::gcd(n, d) == 1);
            let lhs = phi_of_lcm(&factorize_odd(n), &factorize_odd(d), &factorize_odd(h));
            let d2 = d * d;
            let rhs_num = euler_phi(n) as u128 * euler_phi(d2) as u128 * euler_phi(h) as u128;
            let rhs_den = euler_phi(num_integer::gcd(n, h)) as u128
                * euler_phi(num_integer::gcd(d2, h)) as u128;
            prop_assert_eq!(lhs * rhs_den, rhs_num);
        });
    }

    #[test]
    fn prefactor_identity_three_halves() {
        // (3/2) * (1/3h) = 1/(2h) exactly, for any odd h.
        for h in [1i64, 3, 5, 15, 45] {
            let lhs = ExactRational::new(BigInt::from(3), BigInt::from(2))
                * ExactRational::new(BigInt::from(1), BigInt::from(3 * h));
            assert_eq!(lhs, ExactRational::new(BigInt::from(1), BigInt::from(2 * h)));
        }
    }

    #[test]
    fn convergence_deviation_shrinks() {
        let tg = target(0, 1);
        let rows = s_of_t_convergence(300, &tg, &[10, 30], 100_000).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].predicted, rows[1].predicted);
        let dev0 = (rows[0].s_over_t - rows[0].predicted).abs();
        let dev1 = (rows[1].s_over_t - rows[1].predicted).abs();
        assert!(dev1 < dev0, "dev {dev0} -> {dev1} should shrink");
        assert!(dev1 < 1e-3, "R=30 deviation {dev1}");
    }

    #[test]
    fn rejects_degenerate_truncations() {
        assert!(STConfig::new(9, 0, 3, target(0, 1)).is_err());
        assert!(STConfig::new(9, 15, 0, target(0, 1)).is_err());
        assert!(STConfig::new(9, U_MAX_LIMIT + 1, 3, target(0, 1)).is_err());
    }
}
