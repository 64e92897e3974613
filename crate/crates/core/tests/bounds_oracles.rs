//! Independent evaluations of the scalar bound calculus.

use lorentz_core::bounds::{
    a_n, abstract_a_n, lld_bound, modulus_mb, modulus_mb_tilde, safe_log, tilde_ell1, SlowlyVaryingFn, TildeMode,
};
use proptest::prelude::*;

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `∫₁^{1+x} u⁻¹ ℓ(u / safe_log u) du` straight in the variable `u`, split at
/// the jump of `safe_log` at `u = 2`.
fn tilde_by_simpson(ell: impl Fn(f64) -> f64, x: f64, extra_log_square: bool) -> f64 {
    let f = |u: f64| {
        let lu = safe_log(u);
        let w = if extra_log_square { lu * lu } else { 1.0 };
        w * ell(u / lu) / u
    };
    // The left end of [2, 1+x] must see the u ≥ 2 branch.
    simpson(f, 1.0, 2.0 - 1e-15, 20_000) + simpson(f, 2.0, 1.0 + x, 200_000)
}

#[test]
fn tilde_ell1_matches_direct_quadrature() {
    let log = SlowlyVaryingFn::log();
    let oracle = tilde_by_simpson(|y| safe_log(y.max(1.0)), 100.0, false);
    let value = tilde_ell1(&log, 100.0, TildeMode::Standard).unwrap();
    assert!((value - oracle).abs() < 1e-7 * oracle, "{value} vs {oracle}");

    let sq = SlowlyVaryingFn::log_power(2.0);
    let oracle = tilde_by_simpson(|y| safe_log(y.max(1.0)).powi(2), 100.0, true);
    let value = tilde_ell1(&sq, 100.0, TildeMode::Optimised).unwrap();
    assert!((value - oracle).abs() < 1e-7 * oracle, "{value} vs {oracle}");

    let one = SlowlyVaryingFn::one();
    let value = tilde_ell1(&one, 100.0, TildeMode::Standard).unwrap();
    assert!((value - 101f64.ln()).abs() < 1e-13);
}

#[test]
fn tilde_modulus_is_a_substitution_of_the_plain_one() {
    // With ℓ₁ = 1 the tilde function is log(1 + x) in closed form.
    let one = SlowlyVaryingFn::one();
    let big_l = |r: f64| -r.ln();
    let l_tilde = |r: f64| big_l(r).powi(2) * (1.0 + 1.0 / r).ln();
    for &(t, h, b) in &[(0.1, 0.01, 1.0), (0.3, 0.002, 0.5), (0.05, 0.2, 2.0)] {
        let (lt, lh, lth) = (l_tilde(t), big_l(h), l_tilde(h));
        let t2 = t * t * lt;
        let oracle = h * lth * (1.0 + lh * t2 + h.powf(-b * t2) * lh * lh * t2 * t2);
        let value = modulus_mb_tilde(&[t], &[h], b, &one).unwrap();
        assert!((value - oracle).abs() < 1e-12 * oracle, "{value} vs {oracle}");

        let t2 = t * t * big_l(t);
        let plain = h * lh * (1.0 + lh * t2 + h.powf(-b * t2) * lh * lh * t2 * t2);
        assert!((modulus_mb(&[t], &[h], b).unwrap() - plain).abs() < 1e-12 * plain);
    }
}

#[test]
fn modulus_rejects_points_outside_the_unit_ball() {
    assert!(modulus_mb(&[0.0], &[0.1], 1.0).is_err());
    assert!(modulus_mb(&[0.1], &[1.0], 1.0).is_err());
    assert!(modulus_mb(&[0.8, 0.8], &[0.1], 1.0).is_err());
}

#[test]
fn lld_bound_reference_values() {
    // n = 100, N = (10, 0): a_n² = 100 log 100.
    let an2 = 100.0 * 100f64.ln();
    let l = 10f64.ln();
    let d1 = 100.0 / an2.sqrt() * l / 101.0;
    assert!((lld_bound(100, [10, 0], 1, 1.0) - d1).abs() < 1e-15);
    // log 10 exceeds 2, so the inner safe_log is a plain log.
    let d2 = 100.0 / an2 * l * l.ln() / 101.0;
    assert!((d2 - 0.004129).abs() < 5e-7);
    assert!((lld_bound(100, [10, 0], 2, 1.0) - d2).abs() < 1e-15);
}

proptest! {
    #[test]
    fn a_n_squares_to_n_log_n(n in 2u64..10_000_000) {
        let nf = n as f64;
        prop_assert!((a_n(n).powi(2) - nf * nf.ln()).abs() < 1e-9 * nf * nf.ln());
        prop_assert!(a_n(n + 1) > a_n(n));
    }

    #[test]
    fn abstract_normalizer_solves_its_equation(n in 4u64..1_000_000, power in 0.0..2.0f64) {
        let ell2 = SlowlyVaryingFn::log_power(power);
        let a = abstract_a_n(&ell2, n).unwrap();
        let rhs = n as f64 * ell2.eval(a);
        prop_assert!((a * a - rhs).abs() < 1e-9 * rhs);
        prop_assert!(abstract_a_n(&ell2, 2 * n).unwrap() > a);
    }

    #[test]
    fn abstract_normalizer_with_log_is_billiard_like(n in 16u64..1_000_000) {
        // a² = n log a gives a_n ≈ √(n log n / 2) to leading order.
        let a = abstract_a_n(&SlowlyVaryingFn::log(), n).unwrap();
        let r = a / a_n(n);
        prop_assert!(r > 0.5 && r < 1.0);
    }

    #[test]
    fn lld_bound_is_linear_in_c(n in 2u64..100_000, x in -500i64..500, y in -500i64..500, c in 0.1..10.0f64) {
        for d in [1, 2] {
            let one = lld_bound(n, [x, y], d, 1.0);
            prop_assert!(one > 0.0);
            prop_assert!((lld_bound(n, [x, y], d, c) - c * one).abs() <= 1e-12 * c * one);
        }
    }
}
