mod common;

use common::*;
use nehari4_core::problem::apply_p;
use nehari4_core::spectral::{
    inverse_transform_with_residue, laplacian, pointwise_power, spectral_inner, transform, inverse_transform,
};
use nehari4_core::{invert_p, Field, GridSpec, Problem};
use proptest::prelude::*;

#[test]
fn random_round_trip() {
    let grid = GridSpec::new(5, 8, TAU).unwrap();
    let u = white_noise(grid, &mut rng(1));
    let back = inverse_transform(&transform(&u).unwrap());
    let err = back.sub(&u).unwrap().l2_norm() / u.l2_norm();
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn eigenmode_property_on_sampled_modes() {
    let grid = GridSpec::new(5, 4, TAU).unwrap();
    let p = unit_problem(5, 4, 2.0, 1.0, 0.1);
    let s = p.symbol().unwrap();
    // Cosines of assorted frequencies below Nyquist.
    for k in [[0i64, 0, 0, 0, 0], [1, 0, 0, 0, 0], [1, 1, 0, 0, 0], [1, -1, 1, 0, 1], [0, 0, 0, 1, 1]] {
        let u = Field::from_fn(grid, |x| x.iter().zip(&k).map(|(xi, ki)| xi * *ki as f64).sum::<f64>().cos()).unwrap();
        let k2: f64 = k.iter().map(|v| (v * v) as f64).sum();
        let pu = apply_p(&p, &u).unwrap();
        let want = u.scaled(s.eval(k2));
        let err = pu.sub(&want).unwrap().max_abs() / want.max_abs();
        assert!(err < 1e-12, "{k:?}: {err:e}");
    }
}

#[test]
fn inverse_round_trip_on_random_data() {
    let p = unit_problem(5, 8, 2.0, 1.0, 0.1);
    let v = white_noise(*p.grid(), &mut rng(2));
    let back = apply_p(&p, &invert_p(&p, &v).unwrap()).unwrap();
    assert!(back.sub(&v).unwrap().l2_norm() <= 1e-10 * v.l2_norm());
    let again = invert_p(&p, &apply_p(&p, &v).unwrap()).unwrap();
    assert!(again.sub(&v).unwrap().l2_norm() <= 1e-10 * v.l2_norm());
}

#[test]
fn plancherel_on_random_fields() {
    let grid = GridSpec::new(5, 6, 3.0).unwrap();
    let mut r = rng(3);
    let (u, v) = (white_noise(grid, &mut r), white_noise(grid, &mut r));
    let direct = u.inner(&v).unwrap();
    let spectral = spectral_inner(&u, &v).unwrap();
    assert!((direct - spectral).abs() <= 1e-10 * u.l2_norm() * v.l2_norm());
}

#[test]
fn operator_outputs_are_real() {
    let grid = GridSpec::new(5, 8, TAU).unwrap();
    let u = white_noise(grid, &mut rng(4));
    let spec = transform(&u).unwrap().apply_radial_symbol(|k2| k2 * k2 + 2.0 * k2 + 1.0);
    let (_, residue) = inverse_transform_with_residue(&spec);
    assert!(residue < 1e-12, "{residue:e}");
}

#[test]
fn laplacian_linear_combination() {
    let grid = GridSpec::new(5, 8, TAU).unwrap();
    let u = Field::from_fn(grid, |x| (2.0 * x[0]).cos() + x[1].cos()).unwrap();
    let want = Field::from_fn(grid, |x| 4.0 * (2.0 * x[0]).cos() + x[1].cos()).unwrap();
    assert!(laplacian(&u).sub(&want).unwrap().max_abs() < 1e-12);
}

/// `Δ²u + (a u′)′` along `x₁` by second-order central differences.
fn fd_operator(a: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d4 = (u(x + 2.0 * h) - 4.0 * u(x + h) + 6.0 * u(x) - 4.0 * u(x - h) + u(x - 2.0 * h)) / h.powi(4);
    let flux = |y: f64| a(y) * (u(y + 0.5 * h) - u(y - 0.5 * h)) / h;
    d4 + (flux(x + 0.5 * h) - flux(x - 0.5 * h)) / h
}

#[test]
fn variable_coefficient_matches_finite_differences() {
    let grid = GridSpec::new(5, 8, TAU).unwrap();
    let a = Field::from_fn(grid, |x| x[0].cos()).unwrap();
    let b = Field::zeros(grid);
    let p = Problem::variable(grid, a, b, Field::constant(grid, 1.0), 0.1, 1.5).unwrap();
    let u = Field::from_fn(grid, |x| x[0].cos()).unwrap();
    let pu = apply_p(&p, &u).unwrap();
    // Sample nodes along x₁ (the field depends on x₁ only).
    let m = grid.modes();
    let stride = m.pow(4);
    let errs: Vec<f64> = [0.02, 0.01]
        .iter()
        .map(|&h| {
            (0..m)
                .map(|i| {
                    let x = grid.coordinates(i * stride)[0];
                    (pu.values()[i * stride] - fd_operator(f64::cos, f64::cos, x, h)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] < 1e-3, "{errs:?}");
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 2.0).abs() < 0.2, "observed order {order}");
}

proptest! {
    #[test]
    fn odd_power_is_odd_and_even_power_is_even(v in -50.0f64..50.0, p in 0.05f64..6.0) {
        let grid = GridSpec::new(5, 4, TAU).unwrap();
        let u = Field::constant(grid, v);
        let neg = Field::constant(grid, -v);
        let odd = pointwise_power(&u, p, true).unwrap().values()[0];
        let odd_neg = pointwise_power(&neg, p, true).unwrap().values()[0];
        let even = pointwise_power(&u, p, false).unwrap().values()[0];
        prop_assert_eq!(odd, -odd_neg);
        prop_assert!((even - v.abs().powf(p)).abs() <= 1e-12 * even.max(1.0));
        prop_assert!(even >= 0.0);
    }

    #[test]
    fn integrate_is_linear(c in -10.0f64..10.0, d in -10.0f64..10.0) {
        let grid = GridSpec::new(5, 4, TAU).unwrap();
        let u = Field::from_fn(grid, |x| c + d * x[2].sin()).unwrap();
        let want = c * TAU.powi(5);
        prop_assert!((nehari4_core::spectral::integrate(&u) - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}
