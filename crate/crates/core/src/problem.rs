use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    apply_radial_multiplier, partial_derivative, Field, GridSpec,
};

/// Constant-coefficient symbol `σ(κ) = |κ|⁴ + α|κ|² + β`, as a function of `|κ|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub alpha: f64,
    pub beta: f64,
}

impl Symbol {
    pub fn eval(&self, k2: f64) -> f64 {
        k2 * k2 + self.alpha * k2 + self.beta
    }

    /// Smallest symbol value over the resolved modes and the `|κ|²` where it occurs.
    pub fn min_on(&self, grid: &GridSpec) -> (f64, f64) {
        let k2 = grid.k_squared();
        k2.iter()
            .map(|&k| (k, self.eval(k)))
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    pub fn check_coercive(&self, grid: &GridSpec) -> Result<()> {
        let (k2, value) = self.min_on(grid);
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::NotCoercive { k2, value })
        }
    }
}

/// Lower-order coefficients of the operator `Δ²u + div(a∇u) + bu`.
#[derive(Clone, Debug)]
pub enum Coefficients {
    /// `a ≡ −alpha`, `b ≡ beta`.
    Constant { alpha: f64, beta: f64 },
    Variable { a: Field, b: Field },
}

/// Which part of the nonlinearity is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    /// Nonlinearity evaluated on `u⁺ = max(u, 0)`.
    #[serde(rename = "+")]
    Plus,
    /// Nonlinearity evaluated on `u⁻ = min(u, 0)`.
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// `Δ²u + div(a∇u) + bu = f|u|^{N−2}u + λ|u|^{q−2}u` on a periodic box.
#[derive(Clone, Debug)]
pub struct Problem {
    grid: GridSpec,
    coefficients: Coefficients,
    f: Field,
    lambda: f64,
    q: f64,
    preconditioner: Symbol,
}

impl Problem {
    pub fn constant(grid: GridSpec, alpha: f64, beta: f64, f: Field, lambda: f64, q: f64) -> Result<Self> {
        let symbol = Symbol { alpha, beta };
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameter("alpha and beta must be finite".into()));
        }
        symbol.check_coercive(&grid)?;
        Self::build(grid, Coefficients::Constant { alpha, beta }, f, lambda, q, symbol)
    }

    /// Variable coefficients; the descent metric uses the constant symbol
    /// built from the means `(−ā, b̄)`, clamped to a coercive pair.
    pub fn variable(grid: GridSpec, a: Field, b: Field, f: Field, lambda: f64, q: f64) -> Result<Self> {
        grid.check_same(a.grid())?;
        grid.check_same(b.grid())?;
        a.check_finite()?;
        b.check_finite()?;
        let mut pre = Symbol {
            alpha: -a.mean(),
            beta: b.mean(),
        };
        if pre.beta <= 0.0 {
            pre.beta = 1.0;
        }
        if pre.check_coercive(&grid).is_err() {
            pre.alpha = 0.0;
        }
        Self::build(grid, Coefficients::Variable { a, b }, f, lambda, q, pre)
    }

    fn build(grid: GridSpec, coefficients: Coefficients, f: Field, lambda: f64, q: f64, preconditioner: Symbol) -> Result<Self> {
        grid.check_same(f.grid())?;
        f.check_finite()?;
        if !(q > 1.0 && q < 2.0) {
            return Err(Error::InvalidParameter(format!("q must lie in (1,2) (got {q})")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and non-negative (got {lambda})"
            )));
        }
        if f.min() <= 0.0 {
            return Err(Error::InvalidParameter("f must be positive everywhere".into()));
        }
        Ok(Self {
            grid,
            coefficients,
            f,
            lambda,
            q,
            preconditioner,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::build(
            self.grid,
            self.coefficients.clone(),
            self.f.clone(),
            lambda,
            self.q,
            self.preconditioner,
        )
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    /// The exact symbol for constant coefficients.
    pub fn symbol(&self) -> Option<Symbol> {
        match self.coefficients {
            Coefficients::Constant { alpha, beta } => Some(Symbol { alpha, beta }),
            Coefficients::Variable { .. } => None,
        }
    }

    /// Constant symbol defining the descent metric (exact for constant coefficients).
    pub fn preconditioner(&self) -> Symbol {
        self.preconditioner
    }

    pub fn f(&self) -> &Field {
        &self.f
    }

    pub fn max_f(&self) -> f64 {
        self.f.max()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn critical_exponent(&self) -> f64 {
        self.grid.critical_exponent()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

/// `P u = Δ²u + div(a∇u) + bu`; constant coefficients use the symbol directly.
pub fn apply_p(problem: &Problem, u: &Field) -> Result<Field> {
    problem.grid().check_same(u.grid())?;
    match problem.coefficients() {
        Coefficients::Constant { alpha, beta } => {
            let s = Symbol { alpha: *alpha, beta: *beta };
            Ok(apply_radial_multiplier(u, |k2| s.eval(k2)))
        }
        Coefficients::Variable { a, b } => {
            let mut out = apply_radial_multiplier(u, |k2| k2 * k2);
            for axis in 0..u.grid().dim() {
                let flux = partial_derivative(u, axis).mul(a)?;
                out = out.add(&partial_derivative(&flux, axis))?;
            }
            out.add(&b.mul(u)?)
        }
    }
}

/// `P⁻¹ v` for constant coefficients.
pub fn invert_p(problem: &Problem, v: &Field) -> Result<Field> {
    problem.grid().check_same(v.grid())?;
    let s = problem.symbol().ok_or_else(|| {
        Error::InvalidParameter("exact inversion needs constant coefficients".into())
    })?;
    s.check_coercive(problem.grid())?;
    Ok(apply_radial_multiplier(v, |k2| 1.0 / s.eval(k2)))
}

/// Inverse of the descent-metric symbol (equal to `invert_p` for constant coefficients).
pub fn invert_preconditioner(problem: &Problem, v: &Field) -> Field {
    let s = problem.preconditioner();
    apply_radial_multiplier(v, |k2| 1.0 / s.eval(k2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::integrate;
    use std::f64::consts::PI;

    fn grid(m: usize) -> GridSpec {
        GridSpec::new(5, m, 2.0 * PI).unwrap()
    }

    fn constant(alpha: f64, beta: f64, m: usize) -> Problem {
        let g = grid(m);
        Problem::constant(g, alpha, beta, Field::constant(g, 1.0), 0.1, 1.5).unwrap()
    }

    #[test]
    fn symbol_on_eigenmode() {
        let p = constant(2.0, 1.0, 6);
        let u = Field::from_fn(*p.grid(), |x| x[0].cos()).unwrap();
        let pu = apply_p(&p, &u).unwrap();
        assert!(pu.sub(&u.scaled(4.0)).unwrap().max_abs() < 1e-12);
        let c = Field::constant(*p.grid(), 2.5);
        assert!(apply_p(&p, &c).unwrap().sub(&c.scaled(1.0)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        let p = constant(2.0, 1.0, 6);
        let v = Field::from_fn(*p.grid(), |x| 4.0 * x[0].cos()).unwrap();
        let u = invert_p(&p, &v).unwrap();
        let want = Field::from_fn(*p.grid(), |x| x[0].cos()).unwrap();
        assert!(u.sub(&want).unwrap().max_abs() < 1e-12);
        let c = Field::constant(*p.grid(), 3.0);
        assert!(invert_p(&p, &c).unwrap().sub(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rejects_non_coercive_and_bad_parameters() {
        let g = grid(6);
        let one = Field::constant(g, 1.0);
        // σ(1) = 1 − 3 + 1 < 0.
        assert!(matches!(
            Problem::constant(g, -3.0, 1.0, one.clone(), 0.1, 1.5),
            Err(Error::NotCoercive { .. })
        ));
        assert!(Problem::constant(g, 2.0, 0.0, one.clone(), 0.1, 1.5).is_err());
        assert!(Problem::constant(g, 2.0, 1.0, one.clone(), 0.1, 2.5).is_err());
        assert!(Problem::constant(g, 2.0, 1.0, one.clone(), -0.1, 1.5).is_err());
        assert!(Problem::constant(g, 2.0, 1.0, one.scaled(-1.0), 0.1, 1.5).is_err());
    }

    #[test]
    fn variable_path_matches_constant_path() {
        let g = grid(6);
        let a = Field::constant(g, -2.0);
        let b = Field::constant(g, 1.0);
        let one = Field::constant(g, 1.0);
        let pv = Problem::variable(g, a, b, one.clone(), 0.1, 1.5).unwrap();
        let pc = Problem::constant(g, 2.0, 1.0, one, 0.1, 1.5).unwrap();
        let u = Field::from_fn(g, |x| (x[0] + 2.0 * x[3]).sin() + 0.3 * x[1].cos()).unwrap();
        let d = apply_p(&pv, &u).unwrap().sub(&apply_p(&pc, &u).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-11);
        assert_eq!(pv.preconditioner(), Symbol { alpha: 2.0, beta: 1.0 });
    }

    #[test]
    fn variable_operator_is_symmetric() {
        let g = grid(6);
        let a = Field::from_fn(g, |x| 0.5 * x[0].cos()).unwrap();
        let b = Field::from_fn(g, |x| 1.0 + 0.2 * x[2].sin()).unwrap();
        let p = Problem::variable(g, a, b, Field::constant(g, 1.0), 0.1, 1.5).unwrap();
        let u = Field::from_fn(g, |x| (x[0] - x[1]).sin()).unwrap();
        let v = Field::from_fn(g, |x| (2.0 * x[0]).cos() * x[4].cos()).unwrap();
        let uv = integrate(&u.mul(&apply_p(&p, &v).unwrap()).unwrap());
        let vu = integrate(&v.mul(&apply_p(&p, &u).unwrap()).unwrap());
        assert!((uv - vu).abs() < 1e-10 * uv.abs().max(1.0));
    }
}
