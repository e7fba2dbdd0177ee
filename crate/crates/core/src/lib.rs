//! Statistics of squarefree values of a_p^2 - 4p in congruence classes.
//!
//! For an elliptic curve over F_p with trace of Frobenius a_p, the integer
//! a_p^2 - 4p is a negative discriminant. This crate counts, across all
//! curves over F_p and all primes p <= x, how often that discriminant is
//! squarefree and congruent to r mod h, and compares the counts against the
//! predicted constant times x / log x. It also evaluates the constant itself
//! (an Euler product), the matrix densities behind it, and the truncated
//! character sums S(T) whose limit recovers it.
//!
//! Modules:
//! - [`modarith`]: sieves, Kronecker symbols, squarefree tests, Delta(r, h).
//! - [`classnum`]: class numbers h(D), weighted H(D), batched tables.
//! - [`census`]: per-prime curve counts, direct and via class numbers.
//! - [`constants`]: the Euler-product constants and their local factors.
//! - [`gl2`]: matrix counts over Z/l^k that give the local densities.
//! - [`sums`]: the truncated quadruple sum S(T) and its convergence table.
//! - [`verify`]: cross-check suites pairing each fast path with an oracle.

pub mod census;
pub mod classnum;
pub mod constants;
pub mod error;
pub mod gl2;
pub mod modarith;
pub mod sums;
pub mod verify;

pub use error::{Error, Result};
pub use modarith::CongruenceTarget;

/// Exact rational scalar used wherever a value must not round.
pub type ExactRational = num_rational::BigRational;

/// Compensated (Kahan) accumulator. Long aggregation loops add terms in a
/// fixed ascending order through this so results are reproducible and the
/// rounding error stays O(1) ulps instead of O(n).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Format a float with 12 significant digits, fixed-point when the exponent
/// is moderate and scientific otherwise. Deterministic across platforms.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    fn trim(s: &str) -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..DIGITS).contains(&mag) {
        let decimals = (DIGITS - 1 - mag).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    } else {
        let s = format!("{:.*e}", (DIGITS - 1) as usize, x);
        match s.find('e') {
            Some(i) => format!("{}e{}", trim(&s[..i]), &s[i + 1..]),
            None => s,
        }
    }
}

/// Pin the global worker pool to `threads` workers. Must run before the
/// first parallel call in the process; the pool cannot be resized once any
/// parallel work has started.
pub fn set_thread_count(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::invalid("thread count must be >= 1".to_string()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::invalid(format!("worker pool already running: {e}")))
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn fmt_sig_basics() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.25404793081), "0.25404793081");
        assert_eq!(fmt_sig(1234.567890123), "1234.56789012");
        assert_eq!(fmt_sig(1e-7), "1e-7");
        assert_eq!(fmt_sig(3.14159265358979e15), "3.14159265359e15");
        assert_eq!(fmt_sig(123456789.0), "123456789");
    }
}
