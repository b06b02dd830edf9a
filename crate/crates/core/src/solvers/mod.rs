//! Constrained minimisation on the Nehari sets and the mountain-pass search.

mod descent;
mod mountain_pass;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{evaluate, EnergyBreakdown};
use crate::nehari::{project_to_nehari, Branch, ThresholdConfig};
use crate::problem::{Problem, Sign};
use crate::spectral::{band_limited_noise, Field, GridSpec};

pub use mountain_pass::{mountain_pass, verify_palais_smale_level, LevelCheck, PathReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// First trial step of a steepest-descent line search.
    pub step: f64,
    pub step_shrink: f64,
    pub max_backtracks: usize,
    pub armijo: f64,
    pub tol_residual: f64,
    /// Relative energy drop below which an iteration counts as stalled.
    pub tol_energy: f64,
    /// Quasi-Newton memory; zero gives plain projected gradient descent.
    pub memory: usize,
    pub seed: u64,
    pub thresholds: ThresholdConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step: 1.0,
            step_shrink: 0.5,
            max_backtracks: 40,
            armijo: 1e-4,
            tol_residual: 1e-7,
            tol_energy: 1e-15,
            memory: 8,
            seed: 0,
            thresholds: ThresholdConfig::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0,1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo must lie in (0,1/2)");
        }
        if !(self.tol_residual > 0.0) || !(self.tol_energy >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// String and climbing-image settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathOptions {
    pub nodes: usize,
    pub max_iters: usize,
    pub step: f64,
    /// Stop the string once the relative transverse gradient at its highest
    /// node falls below this.
    pub tol_string: f64,
    pub bump_amplitude: f64,
    pub climb_max_iters: usize,
    pub climb_step: f64,
    pub climb_step_max: f64,
    pub tol_saddle: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            nodes: 11,
            max_iters: 100,
            step: 0.2,
            tol_string: 1e-3,
            bump_amplitude: 0.5,
            climb_max_iters: 4000,
            climb_step: 0.1,
            climb_step_max: 0.4,
            tol_saddle: 1e-5,
        }
    }
}

impl PathOptions {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 9 || self.nodes.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "path nodes must be odd and at least 9 (got {})",
                self.nodes
            )));
        }
        if !(self.step > 0.0 && self.climb_step > 0.0 && self.climb_step_max >= self.climb_step) {
            return Err(Error::InvalidParameter("path steps must be positive".into()));
        }
        if !(self.tol_string > 0.0 && self.tol_saddle > 0.0) {
            return Err(Error::InvalidParameter("path tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAudit {
    pub min: f64,
    pub max: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: Field,
    pub sign: Option<Sign>,
    pub energy: EnergyBreakdown,
    pub residual_rel: f64,
    pub iters: usize,
    pub converged: bool,
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    /// `J < c*`.
    pub below_threshold: bool,
    pub c_star: f64,
    pub rho: f64,
    pub norm: f64,
    pub spectral_tail: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub sign_audit: Option<SignAudit>,
    pub reseeds: usize,
    pub warnings: Vec<String>,
}

/// Minimise `J` over the large-branch Nehari set, starting from `u0`.
pub fn minimize_on_nehari(problem: &Problem, u0: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    descent::minimize(problem, None, u0, opts)
}

/// Minimise `J±` over its Nehari set.
pub fn minimize_signed(problem: &Problem, sign: Sign, u0: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    descent::minimize(problem, Some(sign), u0, opts)
}

/// Seeded low-frequency noise with unit sup-norm.
pub fn initial_guess(grid: GridSpec, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    band_limited_noise(grid, 3, &mut rng)
}

/// A one-signed start: `±(|noise| + ½)`.
pub fn signed_initial_guess(grid: GridSpec, seed: u64, sign: Sign) -> Field {
    let s = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    initial_guess(grid, seed).map(|v| s * (v.abs() + 0.5))
}

/// A concentrated start `(r² + ε²)^{−(n−4)/2}` centred at `center`, with `r`
/// the periodic distance.
pub fn bubble_seed(grid: GridSpec, eps: f64, center: &[f64]) -> Result<Field> {
    if center.len() != grid.dim() || !(eps > 0.0) {
        return Err(Error::InvalidParameter("bubble seed needs a centre in R^n and eps > 0".into()));
    }
    let l = grid.length();
    let k = (grid.dim() as f64 - 4.0) / 2.0;
    Field::from_fn(grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(center)
            .map(|(xi, ci)| {
                let d = (xi - ci).rem_euclid(l);
                let d = d.min(l - d);
                d * d
            })
            .sum();
        (r2 + eps * eps).powf(-k)
    })
}

/// Result of perturbing a minimiser in random directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimumAudit {
    pub reference: f64,
    pub perturbed: Vec<f64>,
    /// `min_i J(v_i) − J(u)`.
    pub min_delta: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Project `samples` random perturbations of relative metric size `rel` back
/// onto the large-branch Nehari set of the full functional and compare `J`.
pub fn local_minimum_audit(problem: &Problem, u: &Field, samples: usize, rel: f64, seed: u64) -> Result<LocalMinimumAudit> {
    let tolerance = 1e-8;
    let reference = evaluate(problem, u)?.energy;
    let unorm = evaluate(problem, u)?.norm_sq.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed = Vec::with_capacity(samples);
    for _ in 0..samples {
        let eta = band_limited_noise(*u.grid(), 3, &mut rng);
        let enorm = evaluate(problem, &eta)?.norm_sq.sqrt();
        let v = u.axpy(rel * unorm / enorm, &eta)?;
        let p = project_to_nehari(problem, &v, None, Branch::Large)?;
        perturbed.push(p.energy.energy);
    }
    let min_delta = perturbed.iter().fold(f64::INFINITY, |m, &e| m.min(e - reference));
    Ok(LocalMinimumAudit {
        reference,
        perturbed,
        min_delta,
        tolerance,
        passed: min_delta >= -tolerance,
    })
}
