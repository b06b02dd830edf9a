mod common;

use common::rel;
use nalgebra::{DMatrix, DVector};
use nehari4_core::bubble::{
    bubble_integrals, i_pq, k0_estimate, sweep_integrals, threshold_gap_report, BubbleParams,
};
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

fn pq_pairs() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for n in 5..=12 {
        let n = n as f64;
        v.push((n, n / 2.0 - 1.0));
    }
    for (p, q) in [(3.0, 0.0), (4.0, 1.0), (5.5, 2.25), (6.0, 2.0), (7.0, 0.5), (8.0, 3.0), (9.0, 1.0), (10.0, 7.5), (12.0, 4.0), (15.0, 6.5), (3.2, 1.1), (20.0, 9.0)] {
        v.push((p, q));
    }
    v
}

#[test]
fn i_pq_matches_beta_function() {
    let pairs = pq_pairs();
    assert!(pairs.len() >= 20);
    for (p, q) in pairs {
        let want = beta(q + 1.0, p - q - 1.0);
        let got = i_pq(p, q).unwrap();
        assert!(rel(got, want) < 1e-9, "I_{p}^{q}: {got} vs {want}");
    }
}

#[test]
fn i_pq_recursions() {
    for (p, q) in pq_pairs() {
        let lhs = i_pq(p + 1.0, q).unwrap();
        assert!(rel(lhs, (p - q - 1.0) / p * i_pq(p, q).unwrap()) < 1e-9);
        let lhs = i_pq(p + 1.0, q + 1.0).unwrap();
        assert!(rel(lhs, (q + 1.0) / (p - q - 1.0) * i_pq(p + 1.0, q).unwrap()) < 1e-9);
    }
}

#[test]
fn sobolev_constant_matches_closed_form() {
    for n in [5usize, 6, 7, 8, 10] {
        let nf = n as f64;
        let inv = std::f64::consts::PI.powi(2) * nf * (nf - 4.0) * (nf * nf - 4.0) * (gamma(nf / 2.0) / gamma(nf)).powf(4.0 / nf);
        assert!(rel(k0_estimate(n).unwrap(), 1.0 / inv) < 1e-10, "n = {n}");
    }
}

/// Central finite-difference weights for the `order`-th derivative on the
/// offsets `-s..=s`.
fn fd_weights(s: i32, order: usize) -> Vec<f64> {
    let k = (2 * s + 1) as usize;
    let offsets: Vec<f64> = (-s..=s).map(f64::from).collect();
    let a = DMatrix::from_fn(k, k, |i, j| offsets[j].powi(i as i32));
    let mut b = DVector::zeros(k);
    b[order] = (1..=order).product::<usize>() as f64;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

fn derivative(f: &impl Fn(f64) -> f64, r: f64, h: f64, order: usize) -> f64 {
    let w = fd_weights(4, order);
    w.iter().enumerate().map(|(i, wi)| wi * f(r + (i as f64 - 4.0) * h)).sum::<f64>() / h.powi(order as i32)
}

#[test]
fn bubble_solves_the_critical_equation() {
    for n in [6usize, 8, 10] {
        let nf = n as f64;
        let k = (nf - 4.0) / 2.0;
        let u = |r: f64| (1.0 + r * r).powf(-k);
        let h = 0.02;
        for r in [0.0, 0.5, 1.0, 2.0] {
            let d: Vec<f64> = (1..=4).map(|o| derivative(&u, r, h, o)).collect();
            let bilap = if r == 0.0 {
                nf * (nf + 2.0) / 3.0 * d[3]
            } else {
                let c = (nf - 1.0) * (nf - 3.0);
                d[3] + 2.0 * (nf - 1.0) / r * d[2] + c / (r * r) * d[1] - c / (r * r * r) * d[0]
            };
            let want = nf * (nf - 4.0) * (nf * nf - 4.0) * u(r).powf((nf + 4.0) / (nf - 4.0));
            assert!(rel(bilap, want) < 1e-6, "n={n} r={r}: {bilap} vs {want}");
        }
    }
}

fn params(n: usize, s: f64) -> BubbleParams {
    BubbleParams {
        n,
        bubble_eps: 0.02,
        delta: 0.5,
        f0: 1.0,
        laplacian_f0: 0.0,
        scalar_curvature: s,
        a0: 0.0,
        b0: 1.0,
        volume_floor: 1e-6,
    }
}

#[test]
fn b_term_is_little_o_of_eps_squared() {
    let rows = sweep_integrals(&params(8, 0.0), &[0.02, 0.01, 0.005]).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.b_term / (r.eps * r.eps)).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn sweep_matches_pointwise_evaluation() {
    let p = params(7, 1.0);
    let rows = sweep_integrals(&p, &[0.03, 0.01]).unwrap();
    assert_eq!(rows[1], bubble_integrals(&p.with_eps(0.01)).unwrap());
}

#[test]
fn threshold_gap_follows_the_condition() {
    let k0 = k0_estimate(8).unwrap();
    let good = threshold_gap_report(&params(8, 2.0), k0, 0.0, 1.5, &[0.02]).unwrap();
    assert!(good.rows[0].bound < good.c_star);
    let bad = threshold_gap_report(&params(8, -10.0), k0, 0.0, 1.5, &[0.04, 0.02, 0.01]).unwrap();
    assert!(bad.smallest_eps_below.is_none());
}
