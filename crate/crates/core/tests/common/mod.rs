#![allow(dead_code)]

use nehari4_core::{Field, GridSpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU: f64 = std::f64::consts::TAU;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform noise at every node (not band-limited).
pub fn white_noise(grid: GridSpec, rng: &mut ChaCha8Rng) -> Field {
    let v = (0..grid.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Field::new(grid, v).unwrap()
}

/// Low-frequency noise pushed away from zero so that `|u|^q` stays smooth
/// under small perturbations.
pub fn nonvanishing_noise(grid: GridSpec, rng: &mut ChaCha8Rng) -> Field {
    nehari4_core::spectral::band_limited_noise(grid, 2, rng).map(|v| v + 0.2 * v.signum())
}

pub fn unit_problem(n: usize, m: usize, alpha: f64, beta: f64, lambda: f64) -> Problem {
    let grid = GridSpec::new(n, m, TAU).unwrap();
    Problem::constant(grid, alpha, beta, Field::constant(grid, 1.0), lambda, 1.5).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
