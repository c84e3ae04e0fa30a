//! Closed-form coherence against the inverse transform of the sampled
//! spectrum, for every lineshape family.

mod common;

fn check(family: &str) {
    let (_, shape, span) = common::fourier_cases().into_iter().find(|c| c.0 == family).unwrap();
    let e = common::fourier_error(&shape, span, 2e-6);
    assert!(e < 1e-3, "{family}: {e}");
}

#[test]
fn lorentzian() {
    check("lorentzian");
}

#[test]
fn rectangular() {
    check("rectangular");
}

#[test]
fn gaussian() {
    check("gaussian");
}

#[test]
fn fm_triangle() {
    check("fm_triangle");
}
