//! End-to-end checks of the crate's core claims, one test per criterion.
//! Each prints a single PASS line on success; assertion text carries the
//! first counterexample on failure. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the PASS lines).

use frobdisc::census::{box_average_demo, census_range, trace_of_curve, CensusConfig};
use frobdisc::gl2::{count_p1, count_p2};
use frobdisc::modarith::CongruenceTarget;
use frobdisc::verify::{
    standard_targets, verify_census_equivalence, verify_constant_identity, verify_ct,
    verify_deuring, verify_gl2, verify_st,
};
use frobdisc::ExactRational;
use num_bigint::BigInt;

fn passed(n: u32, what: &str) {
    println!("ACCEPTANCE {n:02} PASS: {what}");
}

#[test]
fn acceptance_01_deuring_curve_counts() {
    let report = verify_deuring(499).unwrap();
    assert!(
        report.pass,
        "trace counts diverged from (p-1)H: {:?}",
        report.detail
    );
    passed(
        1,
        &format!(
            "direct trace counts equal (p-1)H(t^2-4p) for all p <= 499 ({} checks)",
            report.checks
        ),
    );
}

#[test]
fn acceptance_02_census_method_equivalence() {
    let targets = standard_targets();
    let report = verify_census_equivalence(499, &targets).unwrap();
    assert!(
        report.pass,
        "census methods disagree: {:?}",
        report.detail
    );
    passed(
        2,
        &format!(
            "direct and Deuring counts agree for all p <= 499 across {} classes ({} checks)",
            targets.len(),
            report.checks
        ),
    );
}

#[test]
fn acceptance_03_constant_identity_factorwise() {
    let report = verify_constant_identity(10_000, &standard_targets()).unwrap();
    assert!(
        report.pass,
        "the two Euler-product routes disagree: {:?}",
        report.detail
    );
    passed(
        3,
        &format!(
            "both routes to the constant agree factorwise at every odd prime <= 10000 ({} checks)",
            report.checks
        ),
    );
}

#[test]
fn acceptance_04_character_sum_closed_form() {
    let report = verify_ct(2_000, 50, &standard_targets()).unwrap();
    assert!(
        report.pass,
        "closed form for c_t diverged from the defining sum: {:?}",
        report.detail
    );
    passed(
        4,
        &format!(
            "c_t closed form equals the defining sum on prime powers <= 2000, t <= 50, \
             and multiplies over coprime pairs <= 200 ({} checks)",
            report.checks
        ),
    );
}

#[test]
fn acceptance_05_matrix_densities() {
    let report = verify_gl2(&[3, 5, 7]).unwrap();
    assert!(
        report.pass,
        "matrix enumerations diverged from closed forms: {:?}",
        report.detail
    );
    // spot-check the documented values directly
    let p1 = count_p1(3).unwrap();
    assert_eq!(
        p1.density,
        ExactRational::new(BigInt::from(61), BigInt::from(72))
    );
    assert_eq!((p1.matching, p1.group_order), (3294, 3888));
    assert_eq!(count_p2(3, 2, 0).unwrap().matching, 0);
    for line in &report.detail {
        println!("  {line}");
    }
    passed(
        5,
        &format!(
            "matrix densities match closed forms for l in {{3, 5, 7}} ({} checks)",
            report.checks
        ),
    );
}

#[test]
fn acceptance_06_census_asymptotic_trend() {
    let target = CongruenceTarget::new(0, 1).unwrap();
    let small = census_range(
        1_000,
        &target,
        &CensusConfig {
            direct_max: 100,
            ..CensusConfig::default()
        },
    )
    .unwrap();
    let large = census_range(100_000, &target, &CensusConfig::default()).unwrap();

    let ratio1_small = small.aggregates.a1 / small.aggregates.predicted_a1;
    let ratio1_large = large.aggregates.a1 / large.aggregates.predicted_a1;
    let ratio2_small = small.aggregates.a2 as f64 / small.aggregates.predicted_a2;
    let ratio2_large = large.aggregates.a2 as f64 / large.aggregates.predicted_a2;

    assert!(
        (0.6..=1.4).contains(&ratio1_large),
        "A1 ratio at x=100000 is {ratio1_large}"
    );
    assert!(
        (0.6..=1.4).contains(&ratio2_large),
        "A2 ratio at x=100000 is {ratio2_large}"
    );
    assert!(
        (ratio1_large - 1.0).abs() < (ratio1_small - 1.0).abs(),
        "A1 ratio did not move toward 1: {ratio1_small} -> {ratio1_large}"
    );
    assert!(
        (ratio2_large - 1.0).abs() < (ratio2_small - 1.0).abs(),
        "A2 ratio did not move toward 1: {ratio2_small} -> {ratio2_large}"
    );
    passed(
        6,
        &format!(
            "census ratios drift toward 1: A1 {ratio1_small:.5} -> {ratio1_large:.5}, \
             A2 {ratio2_small:.5} -> {ratio2_large:.5}"
        ),
    );
}

#[test]
fn acceptance_07_truncated_sum_convergence() {
    let report = verify_st(2_000, &[10, 30, 100], 1_000_000).unwrap();
    assert!(
        report.pass,
        "S(T) did not converge as specified: {:?}",
        report.detail
    );
    for line in &report.detail {
        println!("  {line}");
    }
    passed(
        7,
        "S(T)/T deviation strictly shrinks over R = 10, 30, 100 and small instances are exact",
    );
}

#[test]
fn acceptance_08_box_average_demo() {
    let target = CongruenceTarget::new(0, 1).unwrap();
    let demo = box_average_demo(5, 5, 50, &target).unwrap();

    // fully independent re-count: per-curve loop, per-prime character sums
    let mut curves = 0u64;
    let mut total = 0u128;
    for a in -5i64..=5 {
        for b in -5i64..=5 {
            if 4 * a.pow(3) + 27 * b.pow(2) == 0 {
                continue;
            }
            curves += 1;
            for p in [5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
                let ar = a.rem_euclid(p as i64) as u64;
                let br = b.rem_euclid(p as i64) as u64;
                let Ok(t) = trace_of_curve(p, ar, br) else {
                    continue; // bad reduction at p
                };
                if target.in_delta(t * t - 4 * p as i64) {
                    total += 1;
                }
            }
        }
    }
    assert_eq!(demo.curve_count, curves);
    assert_eq!(demo.curve_count, 118);
    assert_eq!(demo.total, total);
    assert_eq!(demo.average, total as f64 / curves as f64);
    passed(
        8,
        &format!(
            "box average over 118 curves up to x = 50 equals the naive recount ({})",
            demo.average
        ),
    );
}
