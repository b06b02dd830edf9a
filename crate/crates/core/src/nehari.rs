//! Fibering maps, projection onto the Nehari sets and the closed-form
//! threshold constants.
//!
//! Along a ray `t ↦ t·u` the constraint reads
//! `Q(tu) = t²A − λt^qB − t^N C = t^q ψ(t)` with
//! `ψ(t) = A t^{2−q} − λB − C t^{N−q}`, which rises and then falls for
//! `1 < q < 2 < N`; its zeros are the Nehari intersections.

use serde::{Deserialize, Serialize};

use crate::bubble::k0_estimate;
use crate::error::{Error, Result};
use crate::functionals::{evaluate_part, EnergyBreakdown};
use crate::problem::{Problem, Sign, Symbol};
use crate::spectral::{apply_radial_multiplier, Field, GridSpec};

const SCAN_MIN: f64 = 1e-6;
const SCAN_MAX: f64 = 1e6;
const SCAN_POINTS: usize = 2401;

/// Positive zeros of `t ↦ Q(tu)`. `t_small` is the local minimum of the
/// fibering map (absent when `λB = 0`), `t_large` the local maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberingRoots {
    pub t_small: Option<f64>,
    pub t_large: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Small,
    Large,
}

fn suffix(sign: Option<Sign>) -> &'static str {
    match sign {
        None => "",
        Some(Sign::Plus) => "⁺",
        Some(Sign::Minus) => "⁻",
    }
}

/// Roots of `t²A − λt^qB − t^N C` for the scalars of one ray.
///
/// The ray is first rescaled to unit norm; sign changes of `ψ` are bracketed
/// on a geometric grid over `[1e−6, 1e6]` (augmented with the exact maximiser
/// of `ψ`) and refined by bisection in `log t`.
pub fn fibering_roots_from_scalars(a: f64, b: f64, c: f64, lambda: f64, q: f64, crit: f64) -> std::result::Result<FiberingRoots, String> {
    if !(a > 0.0) || !a.is_finite() {
        return Err("the ray has zero norm".into());
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err("the critical term vanishes along the ray".into());
    }
    let scale = a.sqrt();
    let bn = lambda * b / a.powf(q / 2.0);
    let cn = c / a.powf(crit / 2.0);
    let psi = |t: f64| t.powf(2.0 - q) - bn - cn * t.powf(crit - q);

    if bn == 0.0 {
        let t = cn.powf(-1.0 / (crit - 2.0));
        return Ok(FiberingRoots {
            t_small: None,
            t_large: t / scale,
        });
    }

    let t_peak = ((2.0 - q) / ((crit - q) * cn)).powf(1.0 / (crit - 2.0));
    let mut grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| SCAN_MIN * (SCAN_MAX / SCAN_MIN).powf(i as f64 / (SCAN_POINTS - 1) as f64))
        .collect();
    if t_peak > SCAN_MIN && t_peak < SCAN_MAX {
        let at = grid.partition_point(|&t| t < t_peak);
        grid.insert(at, t_peak);
    }
    let values: Vec<f64> = grid.iter().map(|&t| psi(t)).collect();
    let mut up = None;
    let mut down = None;
    for i in 0..grid.len() - 1 {
        if values[i] < 0.0 && values[i + 1] >= 0.0 && up.is_none() {
            up = Some((grid[i], grid[i + 1]));
        }
        if values[i] >= 0.0 && values[i + 1] < 0.0 {
            down = Some((grid[i], grid[i + 1]));
        }
    }
    let (Some(up), Some(down)) = (up, down) else {
        return Err(format!(
            "no sign change of the fibering map (λ too large for this ray; peak value {:e})",
            psi(t_peak)
        ));
    };
    let small = bisect(&psi, up.0, up.1);
    let large = bisect(&psi, down.0, down.1);
    Ok(FiberingRoots {
        t_small: Some(small / scale),
        t_large: large / scale,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let (flo, fhi) = (f(lo).abs(), f(hi).abs());
    if flo <= fhi {
        lo
    } else {
        hi
    }
}

/// Fibering roots of `Q` (or `Q±`) along the ray through `u`.
pub fn fibering_roots(problem: &Problem, u: &Field, sign: Option<Sign>) -> Result<FiberingRoots> {
    let e = evaluate_part(problem, u, sign)?;
    roots_for(&e, problem, sign)
}

pub(crate) fn roots_for(e: &EnergyBreakdown, problem: &Problem, sign: Option<Sign>) -> Result<FiberingRoots> {
    fibering_roots_from_scalars(
        e.norm_sq,
        e.q_term,
        e.crit_term,
        problem.lambda(),
        problem.q(),
        problem.critical_exponent(),
    )
    .map_err(|reason| Error::RayMissesNehari {
        suffix: suffix(sign),
        reason,
    })
}

/// Result of scaling a field onto its Nehari intersection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub field: Field,
    pub t: f64,
    pub energy: EnergyBreakdown,
}

impl Projection {
    pub fn norm(&self) -> f64 {
        self.energy.norm_sq.sqrt()
    }

    /// True when the projected field lies inside the excluded ball `‖u‖ < ρ`.
    pub fn below_rho(&self, rho: f64) -> bool {
        self.norm() < rho
    }
}

/// `t*·u` with `Q(t*u) = 0` on the requested branch.
pub fn project_to_nehari(problem: &Problem, u: &Field, sign: Option<Sign>, branch: Branch) -> Result<Projection> {
    let e = evaluate_part(problem, u, sign)?;
    let (t, energy) = project_breakdown(&e, problem, sign, branch)?;
    Ok(Projection {
        field: u.scaled(t),
        t,
        energy,
    })
}

/// The scaling factor and projected breakdown, from the ray's scalars alone.
pub(crate) fn project_breakdown(
    e: &EnergyBreakdown,
    problem: &Problem,
    sign: Option<Sign>,
    branch: Branch,
) -> Result<(f64, EnergyBreakdown)> {
    let roots = roots_for(e, problem, sign)?;
    let t = match branch {
        Branch::Large => roots.t_large,
        Branch::Small => roots.t_small.ok_or_else(|| Error::RayMissesNehari {
            suffix: suffix(sign),
            reason: "no small root when λ·∫|u|^q vanishes".into(),
        })?,
    };
    Ok((t, e.scaled(t, problem.lambda(), problem.q(), problem.critical_exponent())))
}

/// `λ₀ = (2^{q−2} − 2^{q−N}) V^{1−2/N} / (max f)^{(q−2)/(N−2)} / X^{(q−2)/(N−2)}`,
/// with `X = max((1+ε)K₀, A_ε)`.
pub fn lambda0(volume: f64, max_f: f64, k0: f64, a_eps: f64, sobolev_slack: f64, q: f64, crit: f64) -> f64 {
    let x = ((1.0 + sobolev_slack) * k0).max(a_eps);
    let e = (q - 2.0) / (crit - 2.0);
    (2f64.powf(q - 2.0) - 2f64.powf(q - crit)) * volume.powf(1.0 - 2.0 / crit) / max_f.powf(e) / x.powf(e)
}

/// `λ₁ = ((N−2)Λ^{−q/2} / (2(N−q))) / (V^{1−2/N} X^{q/2} ρ^{q−2})`.
#[allow(clippy::too_many_arguments)]
pub fn lambda1(volume: f64, k0: f64, a_eps: f64, sobolev_slack: f64, rho: f64, q: f64, crit: f64, lambda_equiv: f64) -> f64 {
    let x = ((1.0 + sobolev_slack) * k0).max(a_eps);
    ((crit - 2.0) * lambda_equiv.powf(-q / 2.0) / (2.0 * (crit - q)))
        / (volume.powf(1.0 - 2.0 / crit) * x.powf(q / 2.0) * rho.powf(q - 2.0))
}

/// The variant of `λ₁` whose numerator carries an extra factor `q`.
#[allow(clippy::too_many_arguments)]
pub fn lambda1_with_q_factor(volume: f64, k0: f64, a_eps: f64, sobolev_slack: f64, rho: f64, q: f64, crit: f64, lambda_equiv: f64) -> f64 {
    q * lambda1(volume, k0, a_eps, sobolev_slack, rho, q, crit, lambda_equiv)
}

/// The bound making `(2−N) + λ(N−q)V^{1−2/N}Λ^{q−2}X^{q/2}ρ^{q−2}` negative.
#[allow(clippy::too_many_arguments)]
pub fn lambda1_from_pairing_bound(volume: f64, k0: f64, a_eps: f64, sobolev_slack: f64, rho: f64, q: f64, crit: f64, lambda_equiv: f64) -> f64 {
    let x = ((1.0 + sobolev_slack) * k0).max(a_eps);
    (crit - 2.0)
        / ((crit - q)
            * volume.powf(1.0 - 2.0 / crit)
            * lambda_equiv.powf(q - 2.0)
            * x.powf(q / 2.0)
            * rho.powf(q - 2.0))
}

/// `c* = 2 / (n K₀^{n/4} (max f)^{(n−4)/4})`.
pub fn energy_threshold(n: usize, k0: f64, max_f: f64) -> f64 {
    let n = n as f64;
    2.0 / (n * k0.powf(n / 4.0) * max_f.powf((n - 4.0) / 4.0))
}

/// Bounds of `σ(k) / (1 + |κ|² + |κ|⁴)` over the resolved modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub lambda_low: f64,
    pub lambda_up: f64,
}

pub fn norm_equivalence_for_symbol(grid: &GridSpec, symbol: &Symbol) -> Result<NormBounds> {
    symbol.check_coercive(grid)?;
    let k2 = grid.k_squared();
    let (lo, hi) = k2.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        let r = symbol.eval(k) / (1.0 + k + k * k);
        (lo.min(r), hi.max(r))
    });
    Ok(NormBounds {
        lambda_low: lo,
        lambda_up: hi,
    })
}

pub fn norm_equivalence_constants(problem: &Problem) -> Result<NormBounds> {
    let symbol = problem.symbol().ok_or_else(|| {
        Error::InvalidParameter("norm equivalence constants need constant coefficients".into())
    })?;
    norm_equivalence_for_symbol(problem.grid(), &symbol)
}

/// Tunable inputs of the threshold calculators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    /// `ε` in `(1+ε)K₀`.
    pub sobolev_slack: f64,
    /// `A_ε`; `None` means `(1+ε)K₀`.
    pub a_eps: Option<f64>,
    /// `ρ` as a fraction of the unit-`t₀` norm.
    pub rho_fraction: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            sobolev_slack: 0.1,
            a_eps: None,
            rho_fraction: 0.5,
        }
    }
}

/// All closed-form constants for one problem, together with their inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub n: usize,
    pub q: f64,
    pub critical_exponent: f64,
    pub length: f64,
    pub volume: f64,
    pub max_f: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub sobolev_slack: f64,
    #[serde(rename = "A_eps")]
    pub a_eps: f64,
    pub rho: f64,
    #[serde(rename = "Lambda_equiv")]
    pub lambda_equiv: f64,
    #[serde(rename = "Lambda_up")]
    pub lambda_up: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda1_with_q_factor: f64,
    pub lambda1_from_pairing_bound: f64,
    pub c_star: f64,
}

impl Thresholds {
    pub fn compute(problem: &Problem, cfg: &ThresholdConfig) -> Result<Self> {
        let symbol = problem.symbol().unwrap_or_else(|| problem.preconditioner());
        Self::from_parts(problem.grid(), &symbol, problem.max_f(), problem.q(), cfg)
    }

    pub fn from_parts(grid: &GridSpec, symbol: &Symbol, max_f: f64, q: f64, cfg: &ThresholdConfig) -> Result<Self> {
        if !(cfg.sobolev_slack > 0.0) {
            return Err(Error::InvalidParameter("sobolev_slack must be positive".into()));
        }
        if !(cfg.rho_fraction > 0.0) {
            return Err(Error::InvalidParameter("rho_fraction must be positive".into()));
        }
        if !(max_f > 0.0) {
            return Err(Error::InvalidParameter("max f must be positive".into()));
        }
        let n = grid.dim();
        let crit = grid.critical_exponent();
        let k0 = k0_estimate(n)?;
        let a_eps = cfg.a_eps.unwrap_or((1.0 + cfg.sobolev_slack) * k0);
        if !(a_eps > 0.0) {
            return Err(Error::InvalidParameter("A_eps must be positive".into()));
        }
        let x = ((1.0 + cfg.sobolev_slack) * k0).max(a_eps);
        let rho = cfg.rho_fraction / (max_f.powf(1.0 / (crit - 2.0)) * x.powf(crit / (2.0 * (crit - 2.0))));
        let bounds = norm_equivalence_for_symbol(grid, symbol)?;
        let v = grid.volume();
        let lam = bounds.lambda_low;
        Ok(Self {
            n,
            q,
            critical_exponent: crit,
            length: grid.length(),
            volume: v,
            max_f,
            k0,
            sobolev_slack: cfg.sobolev_slack,
            a_eps,
            rho,
            lambda_equiv: lam,
            lambda_up: bounds.lambda_up,
            lambda0: lambda0(v, max_f, k0, a_eps, cfg.sobolev_slack, q, crit),
            lambda1: lambda1(v, k0, a_eps, cfg.sobolev_slack, rho, q, crit, lam),
            lambda1_with_q_factor: lambda1_with_q_factor(v, k0, a_eps, cfg.sobolev_slack, rho, q, crit, lam),
            lambda1_from_pairing_bound: lambda1_from_pairing_bound(v, k0, a_eps, cfg.sobolev_slack, rho, q, crit, lam),
            c_star: energy_threshold(n, k0, max_f),
        })
    }

    /// `min(λ₀, λ₁)`.
    pub fn lambda_window(&self) -> f64 {
        self.lambda0.min(self.lambda1)
    }

    /// `0.9·min(λ₀, λ₁)`.
    pub fn auto_lambda(&self) -> f64 {
        0.9 * self.lambda_window()
    }
}

/// Roots `x₁ ≤ x₂` of `x² − αx + β`, so that
/// `(Δ + x₁)(Δ + x₂) = Δ² + αΔ + β`.
pub fn maximum_principle_split(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let disc = alpha * alpha - 4.0 * beta;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive (got {alpha})")));
    }
    if !(disc > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "discriminant α² − 4β = {disc:e} is not positive; no real factorization"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive for two positive factors (got {beta})"
        )));
    }
    // The larger root first; the smaller from the product avoids cancellation.
    let x2 = 0.5 * (alpha + disc.sqrt());
    Ok((beta / x2, x2))
}

/// `(Δ + x₁)(Δ + x₂)u`, applied spectrally.
pub fn apply_factorized(x1: f64, x2: f64, u: &Field) -> Field {
    apply_radial_multiplier(u, |k2| (k2 + x1) * (k2 + x2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::apply_p;
    use std::f64::consts::PI;

    #[test]
    fn zero_lambda_closed_forms() {
        let r = fibering_roots_from_scalars(1.0, 1.0, 1.0, 0.0, 1.5, 10.0).unwrap();
        assert!((r.t_large - 1.0).abs() < 1e-14 && r.t_small.is_none());
        let r = fibering_roots_from_scalars(4.0, 1.0, 1.0, 0.0, 1.5, 10.0).unwrap();
        assert!((r.t_large - 1.189207115002721).abs() < 1e-12);
    }

    #[test]
    fn two_roots_with_small_lambda() {
        let (a, b, c, lam, q, n) = (1.0, 1.0, 1.0, 0.1, 1.5, 10.0);
        let r = fibering_roots_from_scalars(a, b, c, lam, q, n).unwrap();
        let ts = r.t_small.unwrap();
        assert!(ts < r.t_large);
        for t in [ts, r.t_large] {
            let qv = t * t * a - lam * t.powf(q) * b - t.powf(n) * c;
            assert!(qv.abs() <= 1e-10 * t * t * a, "{t} {qv}");
        }
    }

    #[test]
    fn large_lambda_misses() {
        assert!(fibering_roots_from_scalars(1.0, 1.0, 1.0, 10.0, 1.5, 10.0).is_err());
        assert!(fibering_roots_from_scalars(1.0, 0.0, 0.0, 0.1, 1.5, 10.0).is_err());
    }

    #[test]
    fn lambda0_examples() {
        let v = lambda0(1.0, 1.0, 1.0 / 1.1, 0.0, 0.1, 1.5, 10.0);
        assert!((v - (2f64.powf(-0.5) - 2f64.powf(-8.5))).abs() < 1e-14);
        assert!((v - 0.704_35).abs() < 1e-5);
        let d = lambda0(2.0, 1.0, 1.0 / 1.1, 0.0, 0.1, 1.5, 10.0) / v;
        assert!((d - 2f64.powf(0.8)).abs() < 1e-13);
    }

    #[test]
    fn lambda0_grows_with_max_f() {
        // The exponent (q−2)/(N−2) sits in the denominator, so max f enters
        // with the positive power (2−q)/(N−2).
        let base = lambda0(1.0, 1.0, 1.0, 1.0, 0.1, 1.5, 10.0);
        let big = lambda0(1.0, 4.0, 1.0, 1.0, 0.1, 1.5, 10.0);
        assert!((big / base - 4f64.powf(0.5 / 8.0)).abs() < 1e-13);
    }

    #[test]
    fn lambda1_examples() {
        let x = 1.0 / 1.1;
        let one = lambda1(1.0, x, 0.0, 0.1, 1.0, 1.5, 10.0, 1.0);
        assert!((one - 8.0 / 17.0).abs() < 1e-14);
        assert!(lambda1(1.0, x, 0.0, 0.1, 2.0, 1.5, 10.0, 1.0) > one);
        let s = lambda1(1.0, x, 0.0, 0.1, 1.0, 1.5, 10.0, 4.0) / one;
        assert!((s - 0.353_553_390_593_273_8).abs() < 1e-14);
        assert!((lambda1_with_q_factor(1.0, x, 0.0, 0.1, 1.0, 1.5, 10.0, 1.0) - 1.5 * one).abs() < 1e-14);
        assert!((lambda1_from_pairing_bound(1.0, x, 0.0, 0.1, 1.0, 1.5, 10.0, 1.0) - 16.0 / 17.0).abs() < 1e-14);
    }

    #[test]
    fn energy_threshold_examples() {
        assert!((energy_threshold(8, 1.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((energy_threshold(8, 1.0, 16.0) - 0.015_625).abs() < 1e-15);
    }

    #[test]
    fn norm_bounds() {
        let g = GridSpec::new(5, 8, 2.0 * PI).unwrap();
        let b = norm_equivalence_for_symbol(&g, &Symbol { alpha: 0.0, beta: 1.0 }).unwrap();
        assert!((b.lambda_up - 1.0).abs() < 1e-15 && b.lambda_low > 0.0 && b.lambda_low <= 1.0);
        let b = norm_equivalence_for_symbol(&g, &Symbol { alpha: 2.0, beta: 1.0 }).unwrap();
        assert!((b.lambda_up - 4.0 / 3.0).abs() < 1e-15);
        assert!(b.lambda_low > 1.0 - 1e-15 && b.lambda_low <= b.lambda_up);
    }

    #[test]
    fn split_examples() {
        let (x1, x2) = maximum_principle_split(3.0, 2.0).unwrap();
        assert!((x1 - 1.0).abs() < 1e-15 && (x2 - 2.0).abs() < 1e-15);
        let beta = 1.0 - 1e-8;
        let (x1, x2) = maximum_principle_split(2.0, beta).unwrap();
        assert!((x1 + x2 - 2.0).abs() < 1e-7 && (x1 * x2 - beta).abs() < 1e-7);
        assert!(maximum_principle_split(2.0, 1.0).is_err());
        assert!(maximum_principle_split(-3.0, 2.0).is_err());
    }

    #[test]
    fn factorization_matches_operator() {
        let g = GridSpec::new(5, 6, 2.0 * PI).unwrap();
        let p = Problem::constant(g, 2.0, 0.5, Field::constant(g, 1.0), 0.1, 1.5).unwrap();
        let (x1, x2) = maximum_principle_split(2.0, 0.5).unwrap();
        let u = Field::from_fn(g, |x| (x[0] + 2.0 * x[1]).cos() - 0.5 * x[4].sin()).unwrap();
        let d = apply_factorized(x1, x2, &u).sub(&apply_p(&p, &u).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-12 * u.max_abs() * 100.0);
    }
}
