//! Full acceptance suite: one line per criterion, then a hard assertion.

use bc_debranges::bridge;
use bc_debranges::validation::*;

#[test]
fn acceptance_suite() {
    let report = run_suite(DEFAULT_SEED, None).expect("suite runs");
    assert_eq!(report.criteria.len(), 14);
    for c in &report.criteria {
        println!(
            "[{}] criterion {:>2} {:<40} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.detail
        );
    }
    let ids: Vec<u32> = report.criteria.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=14).collect::<Vec<_>>());
    let failed: Vec<String> = report
        .criteria
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} ({}): {}", c.id, c.name, c.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
    assert!(report.pass);
}

#[test]
fn tolerances_are_pinned() {
    assert_eq!(DUAL_ROUTE_TOL, 1e-10);
    assert_eq!(GRAM_TOL, 1e-12);
    assert_eq!(REPRODUCING_TOL, 1e-9);
    assert_eq!(KERNEL_ROUTE_TOL, 1e-9);
    assert_eq!(RECOVERY_TOL, 1e-8);
    assert_eq!(E_FROM_KERNEL_TOL, 1e-8);
    assert_eq!(WAVE_ORIGIN_TOL, 1e-4);
    assert_eq!(DIRAC_E_TOL, 1e-8);
    // a factor-4 decay within 25 percent
    assert_eq!(SECOND_ORDER, (3.0, 5.0));
    assert_eq!(FIRST_ORDER_MIN, 1.5);
    assert_eq!(bridge::FIRST_ORDER_RATIO, FIRST_ORDER_MIN);
}

#[test]
fn reports_serialize_identically() {
    let a = run_suite(DEFAULT_SEED, Some("discrete")).unwrap().to_json();
    let b = run_suite(DEFAULT_SEED, Some("discrete")).unwrap().to_json();
    assert_eq!(a, b);
}
