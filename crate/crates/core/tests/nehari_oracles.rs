mod common;

use common::*;
use nehari4_core::bubble::{k0_estimate, leading_coefficient};
use nehari4_core::functionals::evaluate;
use nehari4_core::nehari::{
    apply_factorized, energy_threshold, fibering_roots, fibering_roots_from_scalars, maximum_principle_split,
    project_to_nehari, Branch, ThresholdConfig, Thresholds,
};
use nehari4_core::problem::apply_p;
use nehari4_core::spectral::band_limited_noise;
use nehari4_core::{Field, GridSpec, Problem, Sign};

/// Sign changes of `Q(t) = t² − λt^q − t^N` on a log grid of 10⁴ points.
fn scan_brackets(lam: f64, q: f64, crit: f64) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (0..10_000).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 9_999.0)).collect();
    let phi = |t: f64| t * t - lam * t.powf(q) - t.powf(crit);
    pts.windows(2)
        .filter(|w| (phi(w[0]) < 0.0) != (phi(w[1]) < 0.0))
        .map(|w| (w[0], w[1]))
        .collect()
}

#[test]
fn root_finder_agrees_with_brute_force_scan() {
    let (lam, q, crit) = (0.1, 1.5, 10.0);
    let brackets = scan_brackets(lam, q, crit);
    assert_eq!(brackets.len(), 2);
    let r = fibering_roots_from_scalars(1.0, 1.0, 1.0, lam, q, crit).unwrap();
    let ts = r.t_small.unwrap();
    assert!(brackets[0].0 <= ts && ts <= brackets[0].1);
    assert!(brackets[1].0 <= r.t_large && r.t_large <= brackets[1].1);
}

#[test]
fn projection_lands_on_the_constraint() {
    let p = unit_problem(5, 8, 2.0, 1.0, 0.05);
    let mut r = rng(21);
    for _ in 0..10 {
        let u = band_limited_noise(*p.grid(), 3, &mut r);
        for branch in [Branch::Small, Branch::Large] {
            let proj = project_to_nehari(&p, &u, None, branch).unwrap();
            let e = evaluate(&p, &proj.field).unwrap();
            assert!(e.constraint.abs() <= 1e-10 * e.norm_sq, "{branch:?}: {:e}", e.constraint);
        }
    }
}

#[test]
fn two_branches_inside_the_lambda_window_and_one_at_zero() {
    let p0 = unit_problem(5, 6, 2.0, 1.0, 0.0);
    let th = Thresholds::compute(&p0, &ThresholdConfig::default()).unwrap();
    // On this box λ₀ is far above the largest λ some rays admit, so the
    // window min(λ₀, λ₁) (here set by λ₁) is what guarantees two roots.
    assert!(th.lambda1 < th.lambda0);
    let p = p0.with_lambda(0.9 * th.lambda_window()).unwrap();
    let target = th.rho / ThresholdConfig::default().rho_fraction;
    let mut r = rng(22);
    for _ in 0..10 {
        let u = band_limited_noise(*p.grid(), 3, &mut r);
        let u = u.scaled(target / evaluate(&p, &u).unwrap().norm_sq.sqrt());
        let roots = fibering_roots(&p, &u, None).unwrap();
        assert!(roots.t_small.unwrap() < roots.t_large);
        let single = fibering_roots(&p0, &u, None).unwrap();
        assert!(single.t_small.is_none());
    }
}

#[test]
fn lemma_identities_on_projected_sample() {
    let p0 = unit_problem(5, 6, 2.0, 1.0, 0.0);
    let th = Thresholds::compute(&p0, &ThresholdConfig::default()).unwrap();
    let p = p0.with_lambda(th.auto_lambda()).unwrap();
    let (q, crit, lam) = (p.q(), p.critical_exponent(), p.lambda());
    let mut r = rng(23);
    for _ in 0..20 {
        let u = band_limited_noise(*p.grid(), 3, &mut r);
        let e = project_to_nehari(&p, &u, None, Branch::Large).unwrap().energy;
        let reduced = (crit - 2.0) / (2.0 * crit) * e.norm_sq - lam * (crit - q) / (crit * q) * e.q_term;
        assert!(rel(e.energy, reduced) < 1e-10);
        assert!(e.energy > 0.0);
        let pairing = (2.0 - crit) * e.norm_sq + lam * (crit - q) * e.q_term;
        assert!((e.constraint_pairing(lam, q, crit) - pairing).abs() < 1e-10 * e.norm_sq);
        assert!(pairing < 0.0);
    }
}

#[test]
fn signed_ray_through_positive_field_misses_minus_set() {
    let p = unit_problem(5, 6, 2.0, 1.0, 0.05);
    let u = Field::constant(*p.grid(), 1.0);
    let err = project_to_nehari(&p, &u, Some(Sign::Minus), Branch::Large).unwrap_err();
    assert!(err.to_string().contains("ray misses"), "{err}");
}

#[test]
fn factorization_reproduces_operator() {
    let (alpha, beta) = (2.0, 0.5);
    let (x1, x2) = maximum_principle_split(alpha, beta).unwrap();
    assert!(rel(x1 + x2, alpha) < 1e-14 && rel(x1 * x2, beta) < 1e-14);
    let grid = GridSpec::new(5, 8, TAU).unwrap();
    let p = Problem::constant(grid, alpha, beta, Field::constant(grid, 1.0), 0.1, 1.5).unwrap();
    let mut r = rng(24);
    for _ in 0..3 {
        use rand::Rng;
        let k: Vec<f64> = (0..5).map(|_| r.gen_range(-3..=3) as f64).collect();
        let u = Field::from_fn(grid, |x| x.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>().sin()).unwrap();
        let lhs = apply_factorized(x1, x2, &u);
        let rhs = apply_p(&p, &u).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * rhs.max_abs().max(1.0));
    }
}

#[test]
fn threshold_matches_bubble_leading_coefficient() {
    let k0 = k0_estimate(8).unwrap();
    let c_star = energy_threshold(8, k0, 1.0);
    let from_bubble = 2.0 / 8.0 * leading_coefficient(8, k0, 1.0);
    assert!(rel(c_star, from_bubble) < 1e-2);
}
