//! Energies `J`, `J±`, constraints `Q`, `Q±`, Sobolev gradients and
//! Euler–Lagrange residuals.
//!
//! With `A = ‖u‖²`, `B = ∫|u|^q` and `C = ∫f|u|^N`:
//! `J = ½A − (λ/q)B − C/N` and `Q = ⟨∇J(u), u⟩ = A − λB − C`.
//! The signed variants evaluate `B` and `C` on `u⁺` or `u⁻` only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problem::{apply_p, invert_preconditioner, Coefficients, Problem, Sign, Symbol};
use crate::spectral::{
    fixed_order_dot, inverse_transform, laplacian, partial_derivative, transform_unchecked,
    Field, Spectrum,
};

/// The five scalars describing a field's energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub norm_sq: f64,
    pub q_term: f64,
    pub crit_term: f64,
    #[serde(rename = "J")]
    pub energy: f64,
    #[serde(rename = "Q")]
    pub constraint: f64,
}

impl EnergyBreakdown {
    pub fn assemble(norm_sq: f64, q_term: f64, crit_term: f64, lambda: f64, q: f64, crit: f64) -> Self {
        Self {
            norm_sq,
            q_term,
            crit_term,
            energy: 0.5 * norm_sq - lambda / q * q_term - crit_term / crit,
            constraint: norm_sq - lambda * q_term - crit_term,
        }
    }

    /// The breakdown of `t·u` for `t > 0`, from homogeneity.
    pub fn scaled(&self, t: f64, lambda: f64, q: f64, crit: f64) -> Self {
        Self::assemble(
            t * t * self.norm_sq,
            t.powf(q) * self.q_term,
            t.powf(crit) * self.crit_term,
            lambda,
            q,
            crit,
        )
    }

    /// `⟨∇Q(u), u⟩ = 2A − λqB − NC`.
    pub fn constraint_pairing(&self, lambda: f64, q: f64, crit: f64) -> f64 {
        2.0 * self.norm_sq - lambda * q * self.q_term - crit * self.crit_term
    }
}

#[inline]
fn active_part(v: f64, sign: Option<Sign>) -> f64 {
    match sign {
        None => v,
        Some(Sign::Plus) => v.max(0.0),
        Some(Sign::Minus) => v.min(0.0),
    }
}

#[inline]
fn abs_pow(a: f64, p: f64) -> f64 {
    if p == p.trunc() && p.abs() < 64.0 {
        a.powi(p as i32)
    } else {
        a.powf(p)
    }
}

/// `(∫|w|^q, ∫f|w|^N)` with `w` the active part of `u`.
fn nonlinear_integrals(problem: &Problem, u: &Field, sign: Option<Sign>) -> (f64, f64) {
    let q = problem.q();
    let crit = problem.critical_exponent();
    let partials: Vec<(f64, f64)> = u
        .values()
        .par_chunks(4096)
        .zip(problem.f().values().par_chunks(4096))
        .map(|(uc, fc)| {
            uc.iter().zip(fc).fold((0.0, 0.0), |(b, c), (&v, &f)| {
                let a = active_part(v, sign).abs();
                (b + abs_pow(a, q), c + f * abs_pow(a, crit))
            })
        })
        .collect();
    let h = u.grid().cell_volume();
    let (b, c) = partials
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (b * h, c * h)
}

/// `λ|w|^{q−2}w + f|w|^{N−2}w`, zero wherever the active part vanishes.
pub fn nonlinearity(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<Field> {
    problem.grid().check_same(u.grid())?;
    let (lambda, q, crit) = (problem.lambda(), problem.q(), problem.critical_exponent());
    u.zip_map(problem.f(), |v, f| {
        let w = active_part(v, sign);
        let a = w.abs();
        (lambda * abs_pow(a, q - 1.0) + f * abs_pow(a, crit - 1.0)).copysign(w)
    })
}

fn quadratic_from_spectrum(s: &Symbol, spec: &Spectrum) -> f64 {
    spec.weighted_energy(|k2| s.eval(k2))
}

/// `‖u‖² = ‖Δu‖² − ∫a|∇u|² + ∫bu²`. Constant coefficients use the
/// Plancherel sum `V Σ σ(k)|û(k)|²`.
pub fn sobolev_norm_sq(problem: &Problem, u: &Field) -> Result<f64> {
    problem.grid().check_same(u.grid())?;
    match problem.symbol() {
        Some(s) => Ok(quadratic_from_spectrum(&s, &transform_unchecked(u))),
        None => quadratic_form_by_quadrature(problem, u),
    }
}

/// The same quadratic form assembled node by node from spectral derivatives.
pub fn quadratic_form_by_quadrature(problem: &Problem, u: &Field) -> Result<f64> {
    problem.grid().check_same(u.grid())?;
    let g = *u.grid();
    let lap = laplacian(u);
    let (a, b) = match problem.coefficients() {
        Coefficients::Constant { alpha, beta } => (Field::constant(g, -alpha), Field::constant(g, *beta)),
        Coefficients::Variable { a, b } => (a.clone(), b.clone()),
    };
    let mut grad_sq = Field::zeros(g);
    for axis in 0..g.dim() {
        let d = partial_derivative(u, axis);
        grad_sq = grad_sq.add(&d.mul(&d)?)?;
    }
    Ok(lap.inner(&lap)? - a.inner(&grad_sq)? + b.inner(&u.mul(u)?)?)
}

/// `J`, `Q` and their ingredients.
pub fn evaluate(problem: &Problem, u: &Field) -> Result<EnergyBreakdown> {
    evaluate_part(problem, u, None)
}

/// `J±`, `Q±`: the nonlinear terms see only `u⁺` (resp. `u⁻`).
pub fn evaluate_signed(problem: &Problem, u: &Field, sign: Sign) -> Result<EnergyBreakdown> {
    evaluate_part(problem, u, Some(sign))
}

pub fn evaluate_part(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<EnergyBreakdown> {
    let a = sobolev_norm_sq(problem, u)?;
    let (b, c) = nonlinear_integrals(problem, u, sign);
    Ok(EnergyBreakdown::assemble(a, b, c, problem.lambda(), problem.q(), problem.critical_exponent()))
}

/// `P u − λ|w|^{q−2}w − f|w|^{N−2}w`.
pub fn euler_lagrange_residual(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<Field> {
    apply_p(problem, u)?.sub(&nonlinearity(problem, u, sign)?)
}

/// `‖P u − rhs‖₂ / ‖P u‖₂`.
pub fn residual_rel(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<f64> {
    let pu = apply_p(problem, u)?;
    let r = pu.sub(&nonlinearity(problem, u, sign)?)?;
    Ok(relative_norm(&r, &pu))
}

fn relative_norm(r: &Field, reference: &Field) -> f64 {
    let den = reference.l2_norm();
    if den > 0.0 {
        r.l2_norm() / den
    } else {
        r.l2_norm()
    }
}

/// Gradient of `J` (or `J±`) in the operator inner product:
/// `g = P_c⁻¹(P u − rhs)`, which is `u − P⁻¹ rhs` for constant coefficients.
pub fn sobolev_gradient(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<Field> {
    let rhs = nonlinearity(problem, u, sign)?;
    match problem.symbol() {
        Some(_) => u.sub(&invert_preconditioner(problem, &rhs)),
        None => Ok(invert_preconditioner(problem, &apply_p(problem, u)?.sub(&rhs)?)),
    }
}

/// `⟨u, v⟩ = ∫ u · P_c v`, the metric in which gradients are taken.
pub fn sobolev_inner(problem: &Problem, u: &Field, v: &Field) -> Result<f64> {
    problem.grid().check_same(u.grid())?;
    let s = problem.preconditioner();
    let pv = inverse_transform(&transform_unchecked(v).apply_radial_symbol(|k2| s.eval(k2)));
    u.inner(&pv)
}

/// Everything a descent step needs at one point, computed together so that
/// the transforms are shared.
#[derive(Clone, Debug)]
pub struct PointData {
    pub u: Field,
    pub sign: Option<Sign>,
    pub energy: EnergyBreakdown,
    /// `P u`.
    pub pu: Field,
    /// `P u − rhs`, which is also `P_c g`.
    pub residual: Field,
    /// Sobolev gradient `g`.
    pub gradient: Field,
    /// `P_c u`.
    pub pc_u: Field,
}

impl PointData {
    pub fn new(problem: &Problem, u: Field, sign: Option<Sign>) -> Result<Self> {
        problem.grid().check_same(u.grid())?;
        let (b, c) = nonlinear_integrals(problem, &u, sign);
        let rhs = nonlinearity(problem, &u, sign)?;
        let (a, pu, pc_u) = match problem.symbol() {
            Some(s) => {
                let spec = transform_unchecked(&u);
                let a = quadratic_from_spectrum(&s, &spec);
                let pu = inverse_transform(&spec.apply_radial_symbol(|k2| s.eval(k2)));
                (a, pu.clone(), pu)
            }
            None => {
                let pu = apply_p(problem, &u)?;
                let a = u.inner(&pu)?;
                let s = problem.preconditioner();
                let pc_u = crate::spectral::apply_radial_multiplier(&u, |k2| s.eval(k2));
                (a, pu, pc_u)
            }
        };
        let residual = pu.sub(&rhs)?;
        let gradient = match problem.symbol() {
            Some(_) => u.sub(&invert_preconditioner(problem, &rhs))?,
            None => invert_preconditioner(problem, &residual),
        };
        let energy = EnergyBreakdown::assemble(a, b, c, problem.lambda(), problem.q(), problem.critical_exponent());
        Ok(Self {
            u,
            sign,
            energy,
            pu,
            residual,
            gradient,
            pc_u,
        })
    }

    pub fn residual_rel(&self) -> f64 {
        relative_norm(&self.residual, &self.pu)
    }

    /// `‖g‖` in the metric, computed without further transforms.
    pub fn gradient_norm(&self) -> f64 {
        let h = self.u.grid().cell_volume();
        (fixed_order_dot(self.gradient.values(), self.residual.values()) * h)
            .max(0.0)
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(lambda: f64) -> Problem {
        let g = GridSpec::new(5, 6, 2.0 * PI).unwrap();
        Problem::constant(g, 2.0, 1.0, Field::constant(g, 1.0), lambda, 1.5).unwrap()
    }

    fn smooth(g: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::spectral::band_limited_noise(g, 3, &mut rng)
    }

    #[test]
    fn norm_of_single_mode() {
        let p = problem(0.5);
        let u = Field::from_fn(*p.grid(), |x| x[0].cos()).unwrap();
        let want = 4.0 * (2.0 * PI).powi(5) / 2.0;
        let got = sobolev_norm_sq(&p, &u).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
        assert_eq!(sobolev_norm_sq(&p, &Field::zeros(*p.grid())).unwrap(), 0.0);
    }

    #[test]
    fn zero_field_is_trivial() {
        let p = problem(0.5);
        let z = Field::zeros(*p.grid());
        let e = evaluate(&p, &z).unwrap();
        assert_eq!((e.norm_sq, e.q_term, e.crit_term, e.energy, e.constraint), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(euler_lagrange_residual(&p, &z, None).unwrap().max_abs(), 0.0);
        assert_eq!(sobolev_gradient(&p, &z, None).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn breakdown_definitions_at_zero_lambda() {
        let p = problem(0.0);
        let u = smooth(*p.grid(), 1);
        let e = evaluate(&p, &u).unwrap();
        assert!((e.energy - (e.norm_sq / 2.0 - e.crit_term / 10.0)).abs() < 1e-12 * e.norm_sq);
        assert!((e.constraint - (e.norm_sq - e.crit_term)).abs() < 1e-12 * e.norm_sq);
    }

    #[test]
    fn signed_evaluations() {
        let p = problem(0.3);
        let u = smooth(*p.grid(), 2).map(|v| v.abs() + 0.1);
        let full = evaluate(&p, &u).unwrap();
        assert_eq!(evaluate_signed(&p, &u, Sign::Plus).unwrap(), full);
        let neg = u.scaled(-1.0);
        let e = evaluate_signed(&p, &neg, Sign::Plus).unwrap();
        assert_eq!((e.q_term, e.crit_term), (0.0, 0.0));
        assert!((e.energy - 0.5 * e.norm_sq).abs() < 1e-15 * e.norm_sq);
        let mixed = smooth(*p.grid(), 3);
        let j = evaluate(&p, &mixed).unwrap().energy;
        assert!(evaluate_signed(&p, &mixed, Sign::Plus).unwrap().energy >= j);
        assert!(evaluate_signed(&p, &mixed, Sign::Minus).unwrap().energy >= j);
    }

    #[test]
    fn homogeneity() {
        let p = problem(0.4);
        let u = smooth(*p.grid(), 4);
        let e = evaluate(&p, &u).unwrap();
        for t in [0.3, 1.7, 4.0] {
            let et = evaluate(&p, &u.scaled(t)).unwrap();
            let s = e.scaled(t, p.lambda(), p.q(), p.critical_exponent());
            for (a, b) in [(et.norm_sq, s.norm_sq), (et.q_term, s.q_term), (et.crit_term, s.crit_term)] {
                assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} {b}");
            }
        }
    }

    #[test]
    fn gradient_pairs_with_u_to_give_q() {
        let p = problem(0.4);
        let u = smooth(*p.grid(), 5).scaled(0.7);
        let g = sobolev_gradient(&p, &u, None).unwrap();
        let pairing = sobolev_inner(&p, &g, &u).unwrap();
        let q = evaluate(&p, &u).unwrap().constraint;
        assert!((pairing - q).abs() <= 1e-10 * q.abs().max(1.0), "{pairing} {q}");
    }

    #[test]
    fn point_data_agrees_with_free_functions() {
        let p = problem(0.4);
        let u = smooth(*p.grid(), 6);
        for sign in [None, Some(Sign::Plus), Some(Sign::Minus)] {
            let d = PointData::new(&p, u.clone(), sign).unwrap();
            assert_eq!(d.residual_rel(), residual_rel(&p, &u, sign).unwrap());
            let g = sobolev_gradient(&p, &u, sign).unwrap();
            assert!(d.gradient.sub(&g).unwrap().max_abs() < 1e-14);
            let e = evaluate_part(&p, &u, sign).unwrap();
            assert!((d.energy.energy - e.energy).abs() < 1e-12 * e.norm_sq);
        }
    }

    #[test]
    fn nonlinearity_vanishes_off_the_active_part() {
        let p = problem(0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = Field::new(*p.grid(), (0..p.grid().node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let plus = nonlinearity(&p, &u, Some(Sign::Plus)).unwrap();
        let minus = nonlinearity(&p, &u, Some(Sign::Minus)).unwrap();
        let full = nonlinearity(&p, &u, None).unwrap();
        for i in 0..u.values().len() {
            let v = u.values()[i];
            assert!(plus.values()[i] >= 0.0 && minus.values()[i] <= 0.0);
            if v <= 0.0 {
                assert_eq!(plus.values()[i], 0.0);
            }
            assert!((plus.values()[i] + minus.values()[i] - full.values()[i]).abs() < 1e-15);
        }
    }
}
