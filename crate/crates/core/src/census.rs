//! Per-prime census of curves y^2 = x^3 + ax + b over F_p whose trace
//! discriminant a_p^2 - 4p is squarefree and lies in a fixed congruence
//! class, by two independent methods, plus range aggregation against the
//! predicted asymptotics and a tiny box-average demonstration.
//!
//! The direct method enumerates every nonsingular pair (a, b) in F_p^2 and
//! computes its trace by a quadratic-character sum: O(p^3), used as an oracle
//! for small p. The production method uses the Deuring count: exactly
//! (p - 1) H(t^2 - 4p) pairs have trace t, where H is the weighted class
//! number from `classnum`, so the census reduces to O(sqrt(p)) class-number
//! lookups. A range run checks the two against each other below a cutoff,
//! aggregates A1 = sum pib/(p(p-1)) and A2 = sum pib, and compares them with
//! the predictions c x/ln x and (c/3) x^3/ln x.
//!
//! Census primes start at 5: short Weierstrass enumeration misbehaves in
//! characteristic 2 and 3, and the excluded primes contribute O(1).

use crate::classnum::{unit_count, ClassTable};
use crate::constants::{is_odd_prime, main_constant};
use crate::error::{Error, Result};
use crate::modarith::{sieve_primes, CongruenceTarget, SpfTable};
use crate::{fmt_sig, ExactRational, KahanSum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// Largest p accepted by the O(p^3) direct enumeration.
pub const DIRECT_ENUM_MAX: u64 = 1_000;

/// Largest p accepted by `trace_of_curve` (a single O(p) character sum).
pub const TRACE_P_MAX: u64 = 10_000_000;

/// Sentinel trace-table entry for singular (a, b).
const SINGULAR: i32 = i32::MIN;

/// How the census of one prime was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensusMethod {
    Direct,
    Deuring,
}

impl fmt::Display for CensusMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CensusMethod::Direct => "direct",
            CensusMethod::Deuring => "deuring",
        })
    }
}

/// One admissible trace value at a prime: t odd, t^2 < 4p, with its
/// discriminant d = t^2 - 4p, class membership, and weighted class number.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub p: u64,
    pub t: i64,
    pub d: i64,
    pub in_delta: bool,
    pub kronecker_h: ExactRational,
}

/// The census of one prime: pib = #{(a, b) nonsingular : a_p^2 - 4p in the
/// class}, at most p^2 - p, and zero whenever the class is empty.
#[derive(Debug, Clone)]
pub struct PrimeCensus {
    pub p: u64,
    pub pib: u64,
    pub method: CensusMethod,
    pub trace_histogram: Option<BTreeMap<i64, u64>>,
}

impl PrimeCensus {
    fn checked(
        p: u64,
        pib: u64,
        method: CensusMethod,
        trace_histogram: Option<BTreeMap<i64, u64>>,
    ) -> Result<PrimeCensus> {
        if pib > p * p - p {
            return Err(Error::invariant(format!(
                "census at p={p} counted {pib} curves, more than the {} nonsingular pairs",
                p * p - p
            )));
        }
        Ok(PrimeCensus {
            p,
            pib,
            method,
            trace_histogram,
        })
    }
}

fn require_prime_ge5(p: u64) -> Result<()> {
    if p < 5 || !is_odd_prime(p) {
        return Err(Error::invalid(format!("p must be a prime >= 5, got {p}")));
    }
    Ok(())
}

fn mulmod(x: u64, y: u64, p: u64) -> u64 {
    ((x as u128 * y as u128) % p as u128) as u64
}

/// The trace a_p of y^2 = x^3 + ax + b over F_p, as the character sum
/// a_p = -sum_x chi(x^3 + ax + b) with chi the quadratic character mod p.
pub fn trace_of_curve(p: u64, a: u64, b: u64) -> Result<i64> {
    require_prime_ge5(p)?;
    if p > TRACE_P_MAX {
        return Err(Error::resource(format!(
            "trace_of_curve sums over all of F_p; p = {p} exceeds the cap {TRACE_P_MAX}"
        )));
    }
    let a = a % p;
    let b = b % p;
    let disc = (4 * mulmod(a, mulmod(a, a, p), p) + 27 * mulmod(b, b, p)) % p;
    if disc == 0 {
        return Err(Error::invalid(format!(
            "curve ({a}, {b}) is singular mod {p}: 4a^3 + 27b^2 = 0"
        )));
    }
    let mut chi = vec![-1i8; p as usize];
    chi[0] = 0;
    for y in 1..p {
        chi[mulmod(y, y, p) as usize] = 1;
    }
    let mut sum = 0i64;
    for x in 0..p {
        let f = (mulmod(mulmod(x, x, p) + a, x, p) + b) % p;
        sum += chi[f as usize] as i64;
    }
    Ok(-sum)
}

/// Trace of every pair (a, b) in F_p^2, indexed a * p + b, with SINGULAR
/// marking 4a^3 + 27b^2 = 0 mod p. The O(p^3) kernel behind the direct
/// census and the box demo: the character table is doubled so the inner sum
/// indexes it without reductions.
fn trace_table(p: u64) -> Result<Vec<i32>> {
    require_prime_ge5(p)?;
    if p > DIRECT_ENUM_MAX {
        return Err(Error::resource(format!(
            "direct enumeration is O(p^3); p = {p} exceeds the cap {DIRECT_ENUM_MAX}"
        )));
    }
    let pu = p as usize;
    let mut chi2 = vec![-1i8; 2 * pu];
    chi2[0] = 0;
    chi2[pu] = 0;
    for y in 1..pu {
        let s = (y * y) % pu;
        chi2[s] = 1;
        chi2[s + pu] = 1;
    }
    let f_a: Vec<usize> = (0..pu).map(|a| (((4 * a) % pu) * a % pu) * a % pu).collect();
    let f_b: Vec<usize> = (0..pu).map(|b| ((27 * b) % pu) * b % pu).collect();

    let mut traces = vec![SINGULAR; pu * pu];
    let mut sx = vec![0usize; pu];
    for a in 0..pu {
        for (x, slot) in sx.iter_mut().enumerate() {
            *slot = ((x * x + a) % pu) * x % pu;
        }
        let fa = f_a[a];
        let row = &mut traces[a * pu..(a + 1) * pu];
        for (b, out) in row.iter_mut().enumerate() {
            let s = fa + f_b[b];
            if s == 0 || s == pu {
                continue;
            }
            let mut acc = 0i32;
            for &v in &sx {
                acc += chi2[v + b] as i32;
            }
            *out = -acc;
        }
    }
    Ok(traces)
}

/// Histogram t -> #{nonsingular (a, b) with trace t} by full enumeration.
pub fn direct_trace_histogram(p: u64) -> Result<BTreeMap<i64, u64>> {
    let table = trace_table(p)?;
    let mut hist: BTreeMap<i64, u64> = BTreeMap::new();
    for &t in &table {
        if t != SINGULAR {
            *hist.entry(t as i64).or_insert(0) += 1;
        }
    }
    let total: u64 = hist.values().sum();
    if total != p * p - p {
        return Err(Error::invariant(format!(
            "trace histogram at p={p} covers {total} pairs, expected {}",
            p * p - p
        )));
    }
    Ok(hist)
}

/// Fold a trace histogram into a census: pib counts the traces whose
/// discriminant lies in the class. Only odd traces can pass the squarefree
/// filter (even t gives 4 | t^2 - 4p); an even survivor is a bug.
pub fn census_from_histogram(
    p: u64,
    histogram: BTreeMap<i64, u64>,
    target: &CongruenceTarget,
) -> Result<PrimeCensus> {
    require_prime_ge5(p)?;
    let mut pib = 0u64;
    for (&t, &count) in &histogram {
        let d = t * t - 4 * p as i64;
        if target.in_delta(d) {
            if t % 2 == 0 {
                return Err(Error::invariant(format!(
                    "even trace t={t} passed the squarefree filter at p={p}"
                )));
            }
            pib += count;
        }
    }
    PrimeCensus::checked(p, pib, CensusMethod::Direct, Some(histogram))
}

/// The census of one prime by full (a, b) enumeration.
pub fn direct_census(p: u64, target: &CongruenceTarget) -> Result<PrimeCensus> {
    census_from_histogram(p, direct_trace_histogram(p)?, target)
}

/// The positive odd traces at p with their discriminants, class membership,
/// and weighted class numbers. Requires the class table to cover |d| <= 4p.
pub fn trace_records(
    p: u64,
    target: &CongruenceTarget,
    class_table: &ClassTable,
) -> Result<Vec<TraceRecord>> {
    require_prime_ge5(p)?;
    if class_table.limit() < 4 * p {
        return Err(Error::resource(format!(
            "class table covers |d| <= {}, need 4p = {}",
            class_table.limit(),
            4 * p
        )));
    }
    let four_p = 4 * p as i64;
    let mut out = Vec::new();
    let mut t = 1i64;
    while t * t < four_p {
        let d = t * t - four_p;
        out.push(TraceRecord {
            p,
            t,
            d,
            in_delta: target.in_delta(d),
            kronecker_h: class_table.kronecker_class_number(d)?,
        });
        t += 2;
    }
    Ok(out)
}

/// Core of the Deuring-side census: pib = sum over odd 1 <= t < 2 sqrt(p)
/// with t^2 - 4p in the class of 2 (p - 1) h(t^2 - 4p) / w(t^2 - 4p), the
/// factor 2 covering +-t. The discriminants are odd and squarefree, hence
/// fundamental, so the single order (h, w) suffices; each term is checked
/// integral (w = 6 forces d = -3, which occurs only for p = 1 mod 3, so
/// 3 divides p - 1).
fn deuring_pib(
    p: u64,
    target: &CongruenceTarget,
    class_table: &ClassTable,
    spf: Option<&SpfTable>,
) -> Result<u64> {
    if class_table.limit() < 4 * p {
        return Err(Error::resource(format!(
            "class table covers |d| <= {}, need 4p = {}",
            class_table.limit(),
            4 * p
        )));
    }
    if !target.gcd_rh_squarefree {
        return Ok(0);
    }
    let four_p = 4 * p as i64;
    let mut pib = 0u64;
    let mut t = 1i64;
    while t * t < four_p {
        let d = t * t - four_p;
        let squarefree = match spf {
            Some(table) => table.is_squarefree(d.unsigned_abs()),
            None => crate::modarith::is_squarefree(d),
        };
        if squarefree && target.congruence_matches(d) {
            let h = class_table.class_number(d)?;
            let w = unit_count(d)? as u64;
            let num = 2 * (p - 1) * h;
            if num % w != 0 {
                return Err(Error::invariant(format!(
                    "Deuring term not integral at p={p}, t={t}, d={d}: 2(p-1)h = {num}, w = {w}"
                )));
            }
            pib += num / w;
        }
        t += 2;
    }
    Ok(pib)
}

/// The census of one prime by class-number counting. Agrees exactly with
/// `direct_census`; O(sqrt p) table lookups instead of O(p^3).
pub fn deuring_census(
    p: u64,
    target: &CongruenceTarget,
    class_table: &ClassTable,
) -> Result<PrimeCensus> {
    require_prime_ge5(p)?;
    let pib = deuring_pib(p, target, class_table, None)?;
    PrimeCensus::checked(p, pib, CensusMethod::Deuring, None)
}

/// Options for a census over a prime range.
#[derive(Debug, Clone)]
pub struct CensusConfig {
    /// Primes up to this bound run both methods and assert agreement.
    pub direct_max: u64,
    /// Truncation for the Euler product behind the predicted values.
    pub prime_cut: u64,
    /// Resumable newline-delimited JSON cache.
    pub cache: Option<PathBuf>,
}

impl Default for CensusConfig {
    fn default() -> Self {
        CensusConfig {
            direct_max: 499,
            prime_cut: crate::constants::DEFAULT_PRIME_CUT,
            cache: None,
        }
    }
}

/// Aggregates of a range census against their predictions.
#[derive(Debug, Clone, Copy)]
pub struct Aggregates {
    /// sum over 5 <= p <= x of pib / (p (p - 1)).
    pub a1: f64,
    /// sum over 5 <= p <= x of pib.
    pub a2: u128,
    /// c x / ln x.
    pub predicted_a1: f64,
    /// (c / 3) x^3 / ln x.
    pub predicted_a2: f64,
}

/// A complete range census: per-prime records in ascending order and the
/// aggregate comparison. `constant` is the Euler-product value c behind the
/// predictions.
#[derive(Debug, Clone)]
pub struct CensusRun {
    pub x: u64,
    pub target: CongruenceTarget,
    pub constant: f64,
    pub records: Vec<PrimeCensus>,
    pub aggregates: Aggregates,
    pub from_cache: usize,
}

const CACHE_FORMAT: &str = "frobdisc-census";
const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    x: u64,
    r: u64,
    h: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    p: u64,
    pib: u64,
    method: CensusMethod,
}

fn parse_cache_header(first_line: Option<std::io::Result<String>>) -> Result<CacheHeader> {
    let header_line = match first_line {
        Some(line) => line?,
        None => return Err(Error::CacheCorrupt("cache file is empty".to_string())),
    };
    let header: CacheHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::CacheCorrupt(format!("bad cache header: {e}")))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err(Error::CacheCorrupt(format!(
            "unsupported cache format {:?} version {}",
            header.format, header.version
        )));
    }
    Ok(header)
}

/// The bound and congruence class a cache file was written for, so a report
/// can be rebuilt from the file alone without repeating the parameters.
pub fn cache_metadata(path: &Path) -> Result<(u64, CongruenceTarget)> {
    let file = fs::File::open(path)?;
    let header = parse_cache_header(BufReader::new(file).lines().next())?;
    let target = CongruenceTarget::new(header.r as i64, header.h)?;
    Ok((header.x, target))
}

fn read_cache(
    path: &Path,
    x: u64,
    target: &CongruenceTarget,
) -> Result<BTreeMap<u64, (u64, CensusMethod)>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = parse_cache_header(lines.next())?;
    if header.x != x || header.r != target.canonical_r || header.h != target.h {
        return Err(Error::CacheCorrupt(format!(
            "cache holds (x, r, h) = ({}, {}, {}), requested ({}, {}, {})",
            header.x, header.r, header.h, x, target.canonical_r, target.h
        )));
    }
    let mut map = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line)
            .map_err(|e| Error::CacheCorrupt(format!("bad record on line {}: {e}", idx + 2)))?;
        if rec.p < 5 || !is_odd_prime(rec.p) || rec.p > x {
            return Err(Error::CacheCorrupt(format!(
                "cache lists p = {} outside the primes of [5, {x}]",
                rec.p
            )));
        }
        if rec.pib > rec.p * rec.p - rec.p {
            return Err(Error::CacheCorrupt(format!(
                "cache claims {} curves at p = {}, more than p^2 - p",
                rec.pib, rec.p
            )));
        }
        if let Some(&(pib, _)) = map.get(&rec.p) {
            if pib != rec.pib {
                return Err(Error::CacheCorrupt(format!(
                    "conflicting entries for p = {}: {} vs {}",
                    rec.p, pib, rec.pib
                )));
            }
        }
        map.insert(rec.p, (rec.pib, rec.method));
    }
    Ok(map)
}

fn append_cache<'a>(
    path: &Path,
    write_header: bool,
    x: u64,
    target: &CongruenceTarget,
    new_records: impl Iterator<Item = &'a PrimeCensus>,
) -> Result<()> {
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = std::io::BufWriter::new(file);
    let emit = |out: &mut dyn Write, value: String| -> Result<()> {
        out.write_all(value.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    };
    if write_header {
        let header = CacheHeader {
            format: CACHE_FORMAT.to_string(),
            version: CACHE_VERSION,
            x,
            r: target.canonical_r,
            h: target.h,
        };
        let line = serde_json::to_string(&header)
            .map_err(|e| Error::invariant(format!("cache header serialization failed: {e}")))?;
        emit(&mut out, line)?;
    }
    for rec in new_records {
        let line = serde_json::to_string(&CacheRecord {
            p: rec.p,
            pib: rec.pib,
            method: rec.method,
        })
        .map_err(|e| Error::invariant(format!("cache record serialization failed: {e}")))?;
        emit(&mut out, line)?;
    }
    out.flush()?;
    Ok(())
}

/// Census over all primes 5 <= p <= x. Below `direct_max` both methods run
/// and must agree (recorded as direct, histogram attached); above it the
/// Deuring count alone runs. Primes are processed in parallel chunks and
/// merged in ascending order, so aggregates are independent of thread count
/// and of how much the cache already held.
pub fn census_range(x: u64, target: &CongruenceTarget, config: &CensusConfig) -> Result<CensusRun> {
    if x < 5 {
        return Err(Error::invalid(format!("census range needs x >= 5, got {x}")));
    }
    let primes: Vec<u64> = sieve_primes(x)?.into_iter().filter(|&p| p >= 5).collect();

    let mut cached: BTreeMap<u64, (u64, CensusMethod)> = BTreeMap::new();
    let mut have_header = false;
    if let Some(path) = &config.cache {
        if path.exists() {
            cached = read_cache(path, x, target)?;
            have_header = true;
        }
    }

    let to_compute: Vec<u64> = primes
        .iter()
        .copied()
        .filter(|p| !cached.contains_key(p))
        .collect();

    let computed: Vec<PrimeCensus> = if to_compute.is_empty() {
        Vec::new()
    } else {
        let spf = SpfTable::build(4 * x)?;
        let class_table = ClassTable::build(4 * x)?;
        let chunks: Vec<Vec<PrimeCensus>> = to_compute
            .par_chunks(32)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|&p| {
                        if p <= config.direct_max {
                            let census =
                                census_from_histogram(p, direct_trace_histogram(p)?, target)?;
                            let deuring = deuring_pib(p, target, &class_table, Some(&spf))?;
                            if census.pib != deuring {
                                return Err(Error::invariant(format!(
                                    "census methods disagree at p={p}: direct {} vs Deuring {deuring}",
                                    census.pib
                                )));
                            }
                            Ok(census)
                        } else {
                            let pib = deuring_pib(p, target, &class_table, Some(&spf))?;
                            PrimeCensus::checked(p, pib, CensusMethod::Deuring, None)
                        }
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        chunks.into_iter().flatten().collect()
    };

    let mut records = Vec::with_capacity(primes.len());
    let mut fresh = computed.into_iter();
    for &p in &primes {
        match cached.get(&p) {
            Some(&(pib, method)) => records.push(PrimeCensus::checked(p, pib, method, None)?),
            None => {
                let rec = fresh.next().ok_or_else(|| {
                    Error::invariant(format!("no computed record for p = {p}"))
                })?;
                if rec.p != p {
                    return Err(Error::invariant(format!(
                        "record order broken: expected p = {p}, got {}",
                        rec.p
                    )));
                }
                records.push(rec);
            }
        }
    }

    if let Some(path) = &config.cache {
        append_cache(
            path,
            !have_header,
            x,
            target,
            records.iter().filter(|r| !cached.contains_key(&r.p)),
        )?;
    }

    let constant = main_constant(target, config.prime_cut)?;
    let mut a1 = KahanSum::default();
    let mut a2: u128 = 0;
    for rec in &records {
        a1.add(rec.pib as f64 / (rec.p as f64 * (rec.p - 1) as f64));
        a2 += rec.pib as u128;
    }
    let xf = x as f64;
    let aggregates = Aggregates {
        a1: a1.value(),
        a2,
        predicted_a1: constant.value * xf / xf.ln(),
        predicted_a2: constant.value / 3.0 * xf.powi(3) / xf.ln(),
    };
    Ok(CensusRun {
        x,
        target: target.clone(),
        constant: constant.value,
        records,
        aggregates,
        from_cache: cached.len(),
    })
}

/// Write a census run as CSV: one row per prime with running aggregates, the
/// prediction evaluated at that prime, and their ratio.
pub fn write_report<W: Write>(run: &CensusRun, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "# curves over F_p with a_p^2 - 4p squarefree in the class {} for 5 <= p <= {}",
        run.target, run.x
    )?;
    writeln!(
        out,
        "# p = 3 is excluded: short Weierstrass enumeration needs p >= 5; the prime shifts sums by O(1)"
    )?;
    writeln!(
        out,
        "# cumulative_A1 = sum pib/(p(p-1)); predicted_A1 = c p / ln p with c = {}",
        fmt_sig(run.constant)
    )?;
    writeln!(out, "p,pib,cumulative_A1,cumulative_A2,predicted_A1,ratio")?;
    let mut a1 = KahanSum::default();
    let mut a2: u128 = 0;
    for rec in &run.records {
        a1.add(rec.pib as f64 / (rec.p as f64 * (rec.p - 1) as f64));
        a2 += rec.pib as u128;
        let pf = rec.p as f64;
        let predicted = run.constant * pf / pf.ln();
        let ratio = if predicted != 0.0 { a1.value() / predicted } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            rec.p,
            rec.pib,
            fmt_sig(a1.value()),
            a2,
            fmt_sig(predicted),
            fmt_sig(ratio)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// The average over a box of integral curves of their prime count.
#[derive(Debug, Clone, Copy)]
pub struct BoxAverage {
    /// Nonsingular equations in the box.
    pub curve_count: u64,
    /// Total over curves of #{5 <= p <= x : good reduction, a_p^2 - 4p in the class}.
    pub total: u128,
    pub average: f64,
}

/// Average, over integral curves y^2 = x^3 + ax + b with |a| <= a_bound,
/// |b| <= b_bound and 4a^3 + 27b^2 != 0, of the number of primes 5 <= p <= x
/// of good reduction whose trace discriminant lies in the class. Each prime
/// is enumerated once into a trace table and all curves reduce against it.
pub fn box_average_demo(
    a_bound: u64,
    b_bound: u64,
    x: u64,
    target: &CongruenceTarget,
) -> Result<BoxAverage> {
    let box_size = (2 * a_bound + 1).saturating_mul(2 * b_bound + 1);
    if box_size > 1_000_000 {
        return Err(Error::resource(format!(
            "curve box holds {box_size} equations, cap 1000000"
        )));
    }
    let mut curves: Vec<(i64, i64)> = Vec::new();
    for a in -(a_bound as i64)..=a_bound as i64 {
        for b in -(b_bound as i64)..=b_bound as i64 {
            let disc = 4 * (a as i128).pow(3) + 27 * (b as i128).pow(2);
            if disc != 0 {
                curves.push((a, b));
            }
        }
    }
    if curves.is_empty() {
        return Err(Error::invalid(
            "curve box is empty after removing singular equations".to_string(),
        ));
    }
    let curve_count = curves.len() as u64;
    if x < 5 || !target.gcd_rh_squarefree {
        return Ok(BoxAverage {
            curve_count,
            total: 0,
            average: 0.0,
        });
    }
    let primes: Vec<u64> = sieve_primes(x)?.into_iter().filter(|&p| p >= 5).collect();
    let table_cost: u64 = primes.iter().map(|&p| p * p * p).sum();
    if table_cost > 2_000_000_000 {
        return Err(Error::resource(format!(
            "trace tables up to x = {x} would visit {table_cost} pairs, cap 2000000000"
        )));
    }
    if curve_count.saturating_mul(primes.len() as u64) > 2_000_000_000 {
        return Err(Error::resource(
            "curve box times prime count exceeds the reduction budget".to_string(),
        ));
    }
    let mut total: u128 = 0;
    for &p in &primes {
        let table = trace_table(p)?;
        let pi = p as i64;
        for &(a, b) in &curves {
            let ar = a.rem_euclid(pi) as u64;
            let br = b.rem_euclid(pi) as u64;
            let t = table[(ar * p + br) as usize];
            if t == SINGULAR {
                continue;
            }
            let d = (t as i64) * (t as i64) - 4 * pi;
            if target.in_delta(d) {
                total += 1;
            }
        }
    }
    Ok(BoxAverage {
        curve_count,
        total,
        average: total as f64 / curve_count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::is_squarefree;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn target(r: i64, h: u64) -> CongruenceTarget {
        CongruenceTarget::new(r, h).unwrap()
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace_of_curve(5, 1, 1).unwrap(), -3);
        assert!(trace_of_curve(7, 0, 0).is_err());
        assert!(trace_of_curve(9, 1, 1).is_err());
        // quadratic twist by the nonresidue 2: (1, 0) -> (4, 0), trace negates
        assert_eq!(
            trace_of_curve(5, 1, 0).unwrap(),
            -trace_of_curve(5, 4, 0).unwrap()
        );
    }

    #[test]
    fn trace_matches_point_count() {
        // #E(F_p) = p + 1 - a_p, with points counted by a bare double loop.
        for p in [5u64, 7, 11, 13] {
            for a in 0..p {
                for b in 0..p {
                    if (4 * a * a % p * a + 27 * b * b) % p == 0 {
                        continue;
                    }
                    let mut points = 1u64; // infinity
                    for x in 0..p {
                        let f = (x * x % p * x + a * x + b) % p;
                        for y in 0..p {
                            if y * y % p == f {
                                points += 1;
                            }
                        }
                    }
                    let t = trace_of_curve(p, a, b).unwrap();
                    assert_eq!(points as i64, p as i64 + 1 - t, "p={p} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn histogram_totals_and_symmetry() {
        let hist = direct_trace_histogram(5).unwrap();
        assert_eq!(hist[&1], 2);
        assert_eq!(hist.values().sum::<u64>(), 20);
        for p in [5u64, 7, 11, 13, 17] {
            let hist = direct_trace_histogram(p).unwrap();
            let bound = 4 * p as i64;
            for (&t, &count) in &hist {
                assert!(t * t <= bound, "Hasse violated at p={p}, t={t}");
                assert_eq!(hist.get(&-t), Some(&count), "asymmetry at p={p}, t={t}");
            }
        }
    }

    #[test]
    fn histogram_matches_weighted_class_numbers() {
        // Deuring at curve-count level: histogram[t] = (p - 1) H(t^2 - 4p),
        // for every trace, even ones included.
        let table = ClassTable::build(400).unwrap();
        for p in [5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
                  61, 67, 71, 73, 79, 83, 89, 97] {
            let hist = direct_trace_histogram(p).unwrap();
            for t in -(p as i64)..=p as i64 {
                if t * t >= 4 * p as i64 {
                    continue;
                }
                let count = hist.get(&t).copied().unwrap_or(0);
                let expected = table.kronecker_class_number(t * t - 4 * p as i64).unwrap()
                    * BigRational::from(BigInt::from(p - 1));
                assert_eq!(
                    BigRational::from(BigInt::from(count)),
                    expected,
                    "p={p} t={t}"
                );
            }
        }
    }

    #[test]
    fn direct_equals_deuring() {
        let table = ClassTable::build(400).unwrap();
        let targets = [target(0, 1), target(1, 3), target(2, 3), target(0, 3), target(2, 5)];
        for p in [5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
                  61, 67, 71, 73, 79, 83, 89, 97] {
            let hist = direct_trace_histogram(p).unwrap();
            for tg in &targets {
                let direct = census_from_histogram(p, hist.clone(), tg).unwrap();
                let deuring = deuring_census(p, tg, &table).unwrap();
                assert_eq!(direct.pib, deuring.pib, "p={p} target={tg}");
            }
        }
        // the one-call form on the documented example
        let direct = direct_census(13, &target(1, 3)).unwrap();
        let deuring = deuring_census(13, &target(1, 3), &table).unwrap();
        assert_eq!(direct.pib, deuring.pib);
    }

    #[test]
    fn deuring_census_p5_values() {
        let table = ClassTable::build(20).unwrap();
        // t = +-1 (d = -19) and t = +-3 (d = -11) each contribute 2 curves
        let census = deuring_census(5, &target(0, 1), &table).unwrap();
        assert_eq!(census.pib, 8);
        let records = trace_records(5, &target(0, 1), &table).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].d, -19);
        assert!(records[0].in_delta);
        assert_eq!(
            records[0].kronecker_h,
            BigRational::new(BigInt::from(1), BigInt::from(2))
        );
        // non-squarefree class: everything vanishes
        assert_eq!(deuring_census(5, &target(0, 9), &table).unwrap().pib, 0);
        assert_eq!(direct_census(5, &target(0, 9)).unwrap().pib, 0);
    }

    #[test]
    fn even_trace_discriminants_are_never_squarefree() {
        for p in [5u64, 7, 11, 13, 17, 19, 23] {
            let mut t = 0i64;
            while t * t < 4 * p as i64 {
                assert!(!is_squarefree(t * t - 4 * p as i64));
                t += 2;
            }
        }
    }

    #[test]
    fn range_single_prime() {
        let run = census_range(5, &target(0, 1), &CensusConfig::default()).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].pib, 8);
        assert_eq!(run.aggregates.a1, 8.0 / 20.0);
        assert_eq!(run.aggregates.a2, 8);
    }

    #[test]
    fn range_ratio_near_frozen_value() {
        // Independently computed reference: at x = 1000 for the full
        // squarefree class, A1 / (c x / ln x) = 1.16929 to five places.
        let config = CensusConfig {
            direct_max: 50,
            prime_cut: 100_000,
            cache: None,
        };
        let run = census_range(1_000, &target(0, 1), &config).unwrap();
        let ratio = run.aggregates.a1 / run.aggregates.predicted_a1;
        assert!((ratio - 1.16929).abs() < 1e-3, "ratio {ratio}");
        let methods: Vec<_> = run.records.iter().map(|r| r.method).collect();
        assert!(run.records.iter().all(|r| (r.p <= 50) == (r.method == CensusMethod::Direct)));
        assert!(methods.contains(&CensusMethod::Direct));
        assert!(methods.contains(&CensusMethod::Deuring));
    }

    #[test]
    fn cache_roundtrip_resume_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("census.ndjson");
        let tg = target(2, 3);
        let config = |cache: Option<PathBuf>| CensusConfig {
            direct_max: 20,
            prime_cut: 10_000,
            cache,
        };

        let cold = census_range(200, &tg, &config(None)).unwrap();
        let warm1 = census_range(200, &tg, &config(Some(path.clone()))).unwrap();
        assert_eq!(warm1.from_cache, 0);
        let warm2 = census_range(200, &tg, &config(Some(path.clone()))).unwrap();
        assert_eq!(warm2.from_cache, cold.records.len());
        for run in [&warm1, &warm2] {
            assert_eq!(run.aggregates.a1.to_bits(), cold.aggregates.a1.to_bits());
            assert_eq!(run.aggregates.a2, cold.aggregates.a2);
            let pibs: Vec<u64> = run.records.iter().map(|r| r.pib).collect();
            let cold_pibs: Vec<u64> = cold.records.iter().map(|r| r.pib).collect();
            assert_eq!(pibs, cold_pibs);
        }

        // partial cache resumes to the same result
        let full = fs::read_to_string(&path).unwrap();
        let partial: Vec<&str> = full.lines().take(8).collect();
        fs::write(&path, partial.join("\n") + "\n").unwrap();
        let resumed = census_range(200, &tg, &config(Some(path.clone()))).unwrap();
        assert_eq!(resumed.from_cache, 7);
        assert_eq!(resumed.aggregates.a1.to_bits(), cold.aggregates.a1.to_bits());
        assert_eq!(fs::read_to_string(&path).unwrap(), full);

        // mismatched parameters are corruption, not silent recompute
        assert!(matches!(
            census_range(300, &tg, &config(Some(path.clone()))),
            Err(Error::CacheCorrupt(_))
        ));
        assert!(matches!(
            census_range(200, &target(0, 1), &config(Some(path.clone()))),
            Err(Error::CacheCorrupt(_))
        ));

        // garbage record line
        fs::write(&path, full + "{\"p\":oops\n").unwrap();
        assert!(matches!(
            census_range(200, &tg, &config(Some(path.clone()))),
            Err(Error::CacheCorrupt(_))
        ));

        // garbage header
        fs::write(&path, "{\"format\":\"other\"}\n").unwrap();
        assert!(matches!(
            census_range(200, &tg, &config(Some(path))),
            Err(Error::CacheCorrupt(_))
        ));
    }

    #[test]
    fn report_shape() {
        let run = census_range(100, &target(0, 1), &CensusConfig {
            direct_max: 10,
            prime_cut: 10_000,
            cache: None,
        })
        .unwrap();
        let mut out = Vec::new();
        write_report(&run, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert!(text.lines().any(|l| l.contains("p = 3 is excluded")));
        let header = text
            .lines()
            .find(|l| !l.starts_with('#'))
            .unwrap();
        assert_eq!(header, "p,pib,cumulative_A1,cumulative_A2,predicted_A1,ratio");
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), run.records.len());
        assert!(rows[0].starts_with("5,"));
        for row in rows {
            assert_eq!(row.split(',').count(), 6);
        }
    }

    #[test]
    fn box_demo_matches_naive_loop() {
        let tg = target(0, 1);
        let demo = box_average_demo(5, 5, 50, &tg).unwrap();
        assert_eq!(demo.curve_count, 118);

        // independent oracle: per-curve loop over primes with the O(p)
        // character-sum trace, no shared tables
        let mut naive_total = 0u128;
        let mut naive_curves = 0u64;
        for a in -5i64..=5 {
            for b in -5i64..=5 {
                if 4 * a.pow(3) + 27 * b.pow(2) == 0 {
                    continue;
                }
                naive_curves += 1;
                for p in [5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
                    let ar = a.rem_euclid(p as i64) as u64;
                    let br = b.rem_euclid(p as i64) as u64;
                    match trace_of_curve(p, ar, br) {
                        Ok(t) => {
                            if tg.in_delta(t * t - 4 * p as i64) {
                                naive_total += 1;
                            }
                        }
                        Err(_) => continue, // bad reduction
                    }
                }
            }
        }
        assert_eq!(demo.curve_count, naive_curves);
        assert_eq!(demo.total, naive_total);
        assert_eq!(demo.average, naive_total as f64 / naive_curves as f64);
    }

    #[test]
    fn box_demo_degenerate_cases() {
        let tg = target(0, 1);
        let empty_range = box_average_demo(5, 5, 4, &tg).unwrap();
        assert_eq!(empty_range.total, 0);
        assert_eq!(empty_range.average, 0.0);
        let empty_class = box_average_demo(5, 5, 50, &target(0, 9)).unwrap();
        assert_eq!(empty_class.total, 0);
        assert!(box_average_demo(0, 0, 50, &tg).is_err());
        assert!(box_average_demo(10_000, 10_000, 50, &tg).is_err());
    }

    #[test]
    fn budget_and_argument_errors() {
        assert!(matches!(
            direct_trace_histogram(1009),
            Err(Error::Resource(_))
        ));
        assert!(census_range(4, &target(0, 1), &CensusConfig::default()).is_err());
        let small_table = ClassTable::build(10).unwrap();
        assert!(matches!(
            deuring_census(5, &target(0, 1), &small_table),
            Err(Error::Resource(_))
        ));
    }
}
