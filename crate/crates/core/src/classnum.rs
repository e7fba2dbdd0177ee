//! Class numbers of imaginary quadratic orders, computed by enumerating
//! reduced primitive binary quadratic forms, plus the weighted class number
//! H(D) and a batched table covering every discriminant down to a limit.
//!
//! A form (a, b, c) with b^2 - 4ac = D < 0 is reduced when |b| <= a <= c and
//! b >= 0 whenever |b| = a or a = c; h(D) counts reduced primitive forms.
//! H(D) sums h(D/f^2) / w(D/f^2) over the square divisors f^2 of D whose
//! cofactor is again a discriminant, where w is the unit count.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;

/// Largest `limit` accepted by `ClassTable::build` (one u32 per |D|).
pub const CLASS_TABLE_LIMIT_MAX: u64 = 1 << 27;

/// A discriminant is an integer D < 0 with D = 0 or 1 mod 4.
pub fn validate_discriminant(d: i64) -> Result<()> {
    if d >= 0 {
        return Err(Error::invalid(format!("discriminant must be negative, got {d}")));
    }
    let m = d.rem_euclid(4);
    if m != 0 && m != 1 {
        return Err(Error::invalid(format!(
            "discriminant must be 0 or 1 mod 4, got {d} = {m} mod 4"
        )));
    }
    Ok(())
}

/// Number of units in the quadratic order of discriminant D:
/// 6 at D = -3, 4 at D = -4, 2 otherwise.
pub fn unit_count(d: i64) -> Result<u32> {
    validate_discriminant(d)?;
    Ok(match d {
        -3 => 6,
        -4 => 4,
        _ => 2,
    })
}

fn gcd3(a: i64, b: i64, c: i64) -> i64 {
    num_integer::gcd(num_integer::gcd(a, b.abs()), c)
}

/// Class number h(D): the number of reduced primitive forms of discriminant D.
pub fn class_number(d: i64) -> Result<u64> {
    validate_discriminant(d)?;
    let abs_d = -d;
    let mut count = 0u64;
    let mut a = 1i64;
    while 3 * a * a <= abs_d {
        // b runs over the residue class of D mod 2 in [-a, a].
        let mut b = -a + (a + d.rem_euclid(2)) % 2;
        while b <= a {
            let num = b * b - d;
            if num % (4 * a) == 0 {
                let c = num / (4 * a);
                if c >= a
                    && !((b.abs() == a || a == c) && b < 0)
                    && gcd3(a, b, c) == 1
                {
                    count += 1;
                }
            }
            b += 2;
        }
        a += 1;
    }
    Ok(count)
}

/// Weighted (Kronecker) class number H(D) for D < 0:
/// the sum of h(D/f^2) / w(D/f^2) over f >= 1 with f^2 | D and
/// D/f^2 = 0 or 1 mod 4. Zero when no f qualifies.
pub fn kronecker_class_number(d: i64) -> Result<BigRational> {
    if d >= 0 {
        return Err(Error::invalid(format!("H(D) requires D < 0, got {d}")));
    }
    let mut sum = BigRational::from(BigInt::from(0));
    let mut f = 1i64;
    while f * f <= -d {
        if d % (f * f) == 0 {
            let d2 = d / (f * f);
            if validate_discriminant(d2).is_ok() {
                sum += BigRational::new(
                    BigInt::from(class_number(d2)?),
                    BigInt::from(unit_count(d2)?),
                );
            }
        }
        f += 1;
    }
    Ok(sum)
}

/// Class numbers h(D) for every discriminant D in [-limit, -3], built by one
/// sweep over reduced forms: each reduced primitive (a, b, c) with
/// 4ac - b^2 <= limit is visited exactly once and credited to its
/// discriminant. The sweep touches O(limit^{3/2}) forms; `visits` counts them.
pub struct ClassTable {
    limit: u64,
    h: Vec<u32>,
    visits: u64,
}

impl ClassTable {
    pub fn build(limit: u64) -> Result<Self> {
        if limit > CLASS_TABLE_LIMIT_MAX {
            return Err(Error::resource(format!(
                "class table limit {limit} exceeds cap {CLASS_TABLE_LIMIT_MAX}"
            )));
        }
        let lim = limit as i64;
        let mut h = vec![0u32; limit as usize + 1];
        let mut visits = 0u64;
        let mut a = 1i64;
        while 3 * a * a <= lim {
            for b in -a..=a {
                // c >= a already forces 4ac - b^2 >= 3a^2 > 0.
                let mut c = a;
                loop {
                    let abs_d = 4 * a * c - b * b;
                    if abs_d > lim {
                        break;
                    }
                    visits += 1;
                    if !((b.abs() == a || a == c) && b < 0) && gcd3(a, b, c) == 1 {
                        h[abs_d as usize] += 1;
                    }
                    c += 1;
                }
            }
            a += 1;
        }
        Ok(ClassTable { limit, h, visits })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Number of forms visited by the build sweep (bounded by 2 limit^{3/2}).
    pub fn visits(&self) -> u64 {
        self.visits
    }

    /// h(D) for a valid discriminant with |D| <= limit.
    pub fn class_number(&self, d: i64) -> Result<u64> {
        validate_discriminant(d)?;
        let abs_d = d.unsigned_abs();
        if abs_d > self.limit {
            return Err(Error::invalid(format!(
                "|{d}| exceeds class table limit {}",
                self.limit
            )));
        }
        Ok(self.h[abs_d as usize] as u64)
    }

    /// H(D) assembled from table entries; |D| <= limit.
    pub fn kronecker_class_number(&self, d: i64) -> Result<BigRational> {
        if d >= 0 {
            return Err(Error::invalid(format!("H(D) requires D < 0, got {d}")));
        }
        if d.unsigned_abs() > self.limit {
            return Err(Error::invalid(format!(
                "|{d}| exceeds class table limit {}",
                self.limit
            )));
        }
        let mut sum = BigRational::from(BigInt::from(0));
        let mut f = 1i64;
        while f * f <= -d {
            if d % (f * f) == 0 {
                let d2 = d / (f * f);
                if validate_discriminant(d2).is_ok() {
                    sum += BigRational::new(
                        BigInt::from(self.h[d2.unsigned_abs() as usize]),
                        BigInt::from(unit_count(d2)?),
                    );
                }
            }
            f += 1;
        }
        Ok(sum)
    }
}
