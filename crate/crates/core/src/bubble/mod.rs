//! Concentrated test functions on a synthetic radial metric.
//!
//! The bubble `u_ε(r) = (C ε⁴/f₀)^{(n−4)/8} η(r) (r² + ε²)^{−(n−4)/2}` with
//! `C = (n−4)n(n²−4)` is integrated against `ω_{n−1} r^{n−1} G(r) dr`, where
//! `G(r) = 1 − S r²/(6n)` models the angular average of the volume density
//! around a point of scalar curvature `S`.

pub mod fit;
pub mod quadrature;
pub mod study;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{fit_expansion, fit_expansion_with_remainder, ExpansionFit, ExpansionModel};
pub use quadrature::{integrate, Quadrature, Tolerance};
pub use study::{expansion_study, CoefficientCheck, ExpansionStudy, LogRegimeCheck};

use crate::error::{Error, Result};

const BUBBLE_TOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-14,
    max_intervals: 8000,
};

/// `Γ(n/2)` for a positive integer `n`, by the half-integer recursion.
pub fn gamma_half(n: usize) -> f64 {
    assert!(n > 0);
    let (mut g, mut x) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    let target = n as f64 / 2.0;
    while x < target - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Area of the unit sphere `S^{n−1}`: `ω_{n−1} = 2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// `(n−4)n(n²−4)`, the constant in `Δ²U = C·U^{(n+4)/(n−4)}`.
pub fn bubble_constant(n: usize) -> f64 {
    let n = n as f64;
    (n - 4.0) * n * (n * n - 4.0)
}

/// Degree-5 smoothstep cutoff: 1 on `[0, δ]`, 0 on `[2δ, ∞)`.
pub fn cutoff_eta(r: f64, delta: f64) -> f64 {
    cutoff_with_derivatives(r, delta).0
}

fn cutoff_with_derivatives(r: f64, delta: f64) -> (f64, f64, f64) {
    if r <= delta {
        return (1.0, 0.0, 0.0);
    }
    if r >= 2.0 * delta {
        return (0.0, 0.0, 0.0);
    }
    let s = (r - delta) / delta;
    let s2 = s * s;
    let v = 1.0 - s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
    let d1 = -30.0 * s2 * (1.0 - s) * (1.0 - s) / delta;
    let d2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (delta * delta);
    (v, d1, d2)
}

/// The cut-off bubble at radius `r`.
pub fn standard_bubble(n: usize, eps: f64, f0: f64, delta: f64, r: f64) -> f64 {
    Profile::new(n, eps, f0, delta).eval(r).0
}

#[derive(Clone, Copy, Debug)]
struct Profile {
    eps2: f64,
    delta: f64,
    amp: f64,
    k: f64,
}

impl Profile {
    fn new(n: usize, eps: f64, f0: f64, delta: f64) -> Self {
        let k = (n as f64 - 4.0) / 2.0;
        let amp = (bubble_constant(n) * eps.powi(4) / f0).powf((n as f64 - 4.0) / 8.0);
        Self {
            eps2: eps * eps,
            delta,
            amp,
            k,
        }
    }

    /// `(v, v′, v″)` by the chain rule on the closed forms.
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        let (eta, eta1, eta2) = cutoff_with_derivatives(r, self.delta);
        if eta == 0.0 && eta1 == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let k = self.k;
        let d = r * r + self.eps2;
        let w = d.powf(-k);
        let w1 = -2.0 * k * r * w / d;
        let w2 = -2.0 * k * w / d + 4.0 * k * (k + 1.0) * r * r * w / (d * d);
        (
            self.amp * eta * w,
            self.amp * (eta1 * w + eta * w1),
            self.amp * (eta2 * w + 2.0 * eta1 * w1 + eta * w2),
        )
    }
}

/// `G(r)` and `G′(r)`; `clamped` marks radii where the floor was applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeFactor {
    pub value: f64,
    pub derivative: f64,
    pub clamped: bool,
}

pub const DEFAULT_VOLUME_FLOOR: f64 = 1e-6;

pub fn metric_volume_factor(n: usize, r: f64, scalar_curvature: f64, floor: f64) -> VolumeFactor {
    let c = scalar_curvature / (6.0 * n as f64);
    let g = 1.0 - c * r * r;
    if g < floor {
        VolumeFactor {
            value: floor,
            derivative: 0.0,
            clamped: true,
        }
    } else {
        VolumeFactor {
            value: g,
            derivative: -2.0 * c * r,
            clamped: false,
        }
    }
}

/// Inputs of the radial bubble model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleParams {
    pub n: usize,
    pub bubble_eps: f64,
    pub delta: f64,
    pub f0: f64,
    pub laplacian_f0: f64,
    #[serde(rename = "S_g0")]
    pub scalar_curvature: f64,
    pub a0: f64,
    pub b0: f64,
    #[serde(default = "default_floor")]
    pub volume_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_VOLUME_FLOOR
}

impl BubbleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n <= 4 {
            return bad(format!("n must exceed 4 (got {})", self.n));
        }
        if !(self.bubble_eps > 0.0 && self.delta > 0.0) {
            return bad("bubble_eps and delta must be positive".into());
        }
        if !(self.f0 > 0.0) {
            return bad("f0 must be positive".into());
        }
        if !(self.volume_floor > 0.0) {
            return bad("volume_floor must be positive".into());
        }
        let finite = [self.laplacian_f0, self.scalar_curvature, self.a0, self.b0];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            bubble_eps: eps,
            ..*self
        }
    }

    /// The radial model `f(r) = f₀ − (Δf₀/(2n)) r²`, whose geometer's
    /// Laplacian at the origin is `Δf₀`.
    pub fn f_at(&self, r: f64) -> f64 {
        self.f0 - self.laplacian_f0 / (2.0 * self.n as f64) * r * r
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0];
        for m in [0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0] {
            let r = m * self.bubble_eps;
            if r < self.delta {
                pts.push(r);
            }
        }
        pts.push(self.delta);
        pts.push(2.0 * self.delta);
        pts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleIntegrals {
    pub eps: f64,
    /// `∫ f |u_ε|^N`.
    #[serde(rename = "massN")]
    pub mass_n: f64,
    /// `∫ a₀ |u_ε′|²`.
    #[serde(rename = "gradSq")]
    pub grad_sq: f64,
    /// `∫ (Δu_ε)²`.
    #[serde(rename = "bilapSq")]
    pub bilap_sq: f64,
    /// `∫ b₀ u_ε²`.
    #[serde(rename = "bTerm")]
    pub b_term: f64,
    /// True when `G` hit its floor somewhere on `[0, 2δ]`.
    pub volume_clamped: bool,
}

impl BubbleIntegrals {
    /// `‖u_ε‖² = ∫(Δu)² − a|∇u|² + bu²`.
    pub fn quadratic_form(&self) -> f64 {
        self.bilap_sq - self.grad_sq + self.b_term
    }

    /// `½‖u_ε‖² − (1/N)∫f|u_ε|^N`, the λ-free upper bound on `J(u_ε)`.
    pub fn energy_bound(&self, n: usize) -> f64 {
        let crit = 2.0 * n as f64 / (n as f64 - 4.0);
        0.5 * self.quadratic_form() - self.mass_n / crit
    }
}

fn radial_integral(p: &BubbleParams, integrand: impl Fn(f64) -> f64) -> Result<f64> {
    let omega = sphere_area(p.n);
    let n1 = (p.n - 1) as i32;
    let q = integrate(
        |r| {
            let g = metric_volume_factor(p.n, r, p.scalar_curvature, p.volume_floor).value;
            integrand(r) * r.powi(n1) * g
        },
        &p.breakpoints(),
        BUBBLE_TOL,
    )?;
    Ok(omega * q.value)
}

fn volume_clamped(p: &BubbleParams) -> bool {
    // G is monotone in r, so checking the outer radius suffices.
    metric_volume_factor(p.n, 2.0 * p.delta, p.scalar_curvature, p.volume_floor).clamped
}

/// The four bubble integrals on `[0, 2δ]`.
pub fn bubble_integrals(p: &BubbleParams) -> Result<BubbleIntegrals> {
    p.validate()?;
    let n = p.n;
    let prof = Profile::new(n, p.bubble_eps, p.f0, p.delta);
    let crit = 2.0 * n as f64 / (n as f64 - 4.0);
    let mass_n = radial_integral(p, |r| p.f_at(r) * prof.eval(r).0.abs().powf(crit))?;
    let grad_sq = if p.a0 == 0.0 {
        0.0
    } else {
        p.a0 * radial_integral(p, |r| prof.eval(r).1.powi(2))?
    };
    let bilap_sq = radial_integral(p, |r| {
        let (_, v1, v2) = prof.eval(r);
        let g = metric_volume_factor(n, r, p.scalar_curvature, p.volume_floor);
        let lap = -(v2 + ((n - 1) as f64 / r) * v1 + g.derivative / g.value * v1);
        lap * lap
    })?;
    let b_term = if p.b0 == 0.0 {
        0.0
    } else {
        p.b0 * radial_integral(p, |r| prof.eval(r).0.powi(2))?
    };
    Ok(BubbleIntegrals {
        eps: p.bubble_eps,
        mass_n,
        grad_sq,
        bilap_sq,
        b_term,
        volume_clamped: volume_clamped(p),
    })
}

/// `bubble_integrals` at every `ε` of a sweep, evaluated concurrently.
pub fn sweep_integrals(params: &BubbleParams, sweep: &[f64]) -> Result<Vec<BubbleIntegrals>> {
    sweep
        .par_iter()
        .map(|&eps| bubble_integrals(&params.with_eps(eps)))
        .collect()
}

/// `∫ |u_ε|^q`.
pub fn bubble_lq(p: &BubbleParams, q: f64) -> Result<f64> {
    p.validate()?;
    let prof = Profile::new(p.n, p.bubble_eps, p.f0, p.delta);
    radial_integral(p, |r| prof.eval(r).0.abs().powf(q))
}

/// `I_p^q = ∫₀^∞ t^q (1+t)^{−p} dt` by quadrature.
///
/// The half-line is split at `t = 1` and the tail folded back with `t = 1/u`;
/// each piece is then desingularised with a power substitution:
/// `I = (1/(q+1)) ∫₀¹ (1 + s^{1/(q+1)})^{−p} ds + (1/(p−q−1)) ∫₀¹ (1 + s^{1/(p−q−1)})^{−p} ds`.
pub fn i_pq(p: f64, q: f64) -> Result<f64> {
    if !(q > -1.0 && p - q > 1.0) || !p.is_finite() || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "I_p^q diverges unless q > −1 and p − q > 1 (got p = {p}, q = {q})"
        )));
    }
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-14,
        max_intervals: 4000,
    };
    let piece = |e: f64| -> Result<f64> {
        let pts = [0.0, 1e-6, 1e-3, 0.1, 1.0];
        let v = integrate(|s: f64| (1.0 + s.powf(1.0 / e)).powf(-p), &pts, tol)?;
        Ok(v.value / e)
    };
    Ok(piece(q + 1.0)? + piece(p - q - 1.0)?)
}

/// `K₀ = ‖U‖_N² / ‖ΔU‖₂²` for `U = (1+r²)^{−(n−4)/2}` on `ℝⁿ`.
pub fn k0_estimate(n: usize) -> Result<f64> {
    if n <= 4 {
        return Err(Error::InvalidParameter(format!("n must exceed 4 (got {n})")));
    }
    let nf = n as f64;
    let k = (nf - 4.0) / 2.0;
    let crit = 2.0 * nf / (nf - 4.0);
    let u = |r: f64| (1.0 + r * r).powf(-k);
    // Analyst's Laplacian of U; its square is sign-independent.
    let lap = |r: f64| {
        let d = 1.0 + r * r;
        let u1 = -2.0 * k * r * d.powf(-k - 1.0);
        let u2 = -2.0 * k * d.powf(-k - 1.0) + 4.0 * k * (k + 1.0) * r * r * d.powf(-k - 2.0);
        u2 + (nf - 1.0) / r * u1
    };
    let half_line = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let pts = [0.0, 0.25, 0.5, 1.0];
        let near = integrate(g, &pts, BUBBLE_TOL)?.value;
        // r = 1/s on [1, ∞).
        let far = integrate(|s| if s == 0.0 { 0.0 } else { g(1.0 / s) / (s * s) }, &pts, BUBBLE_TOL)?.value;
        Ok(near + far)
    };
    let n1 = (n - 1) as i32;
    let mass = half_line(&|r| u(r).powf(crit) * r.powi(n1))?;
    let bilap = half_line(&|r| lap(r).powi(2) * r.powi(n1))?;
    let omega = sphere_area(n);
    Ok((omega * mass).powf(2.0 / crit) / (omega * bilap))
}

/// `1/(K₀^{n/4} f₀^{(n−4)/4})`, the common leading coefficient of the
/// bubble integrals.
pub fn leading_coefficient(n: usize, k0: f64, f0: f64) -> f64 {
    let nf = n as f64;
    1.0 / (k0.powf(nf / 4.0) * f0.powf((nf - 4.0) / 4.0))
}

/// The geometric existence condition at a maximum point of `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCondition {
    pub n: usize,
    pub holds: bool,
    /// The evaluated bracket (`n > 6`) or `S + 3a` (`n = 6`).
    pub margin: f64,
    /// For `n > 6`: the bracket with the alternative `a`-coefficient
    /// `(n−1)n/((n²−4)(n−6))`.
    pub margin_alternative: Option<f64>,
    /// For `n > 6`: `(n/2)·(½β_S + ½γ_a − μ/N)` assembled from the separate
    /// expansion coefficients of the three integrals.
    pub margin_assembled: Option<f64>,
}

pub fn existence_condition(n: usize, scalar_curvature: f64, a0: f64, f0: f64, laplacian_f0: f64) -> Result<ExistenceCondition> {
    if n < 6 {
        return Err(Error::InvalidParameter(format!(
            "the geometric condition is stated for n ≥ 6 (got {n})"
        )));
    }
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter("f0 must be positive".into()));
    }
    let (s, a) = (scalar_curvature, a0);
    if n == 6 {
        let margin = s + 3.0 * a;
        return Ok(ExistenceCondition {
            n,
            holds: margin > 0.0,
            margin,
            margin_alternative: None,
            margin_assembled: None,
        });
    }
    let nf = n as f64;
    let d = nf * nf - 4.0;
    let lf = laplacian_f0 / f0;
    let s_coef = nf * (nf * nf + 4.0 * nf - 20.0) / (2.0 * (nf - 2.0) * d);
    let f_term = nf / (8.0 * (nf - 2.0)) * lf;
    let margin = s_coef * s + nf * (nf - 6.0) / ((nf - 2.0) * d) * a - f_term;
    let alt = nf * (nf * nf + 4.0 * nf - 20.0) / (2.0 * d * (nf - 6.0)) * s + (nf - 1.0) * nf / (d * (nf - 6.0)) * a - f_term;
    let pred = ExpansionPredictions::new(n, s, a, f0, laplacian_f0);
    let crit = 2.0 * nf / (nf - 4.0);
    let assembled = nf / 2.0 * (0.5 * pred.bilap_ratio + 0.5 * pred.grad_ratio - pred.mass_ratio / crit);
    Ok(ExistenceCondition {
        n,
        holds: margin > 0.0,
        margin,
        margin_alternative: Some(alt),
        margin_assembled: Some(assembled),
    })
}

/// Predicted `ε²` coefficients (`n > 6`), normalised by the leading term:
/// `massN ≈ E(1 − mass_ratio ε²)`, `bilapSq ≈ E(1 − bilap_ratio ε²)`,
/// `gradSq ≈ E·grad_ratio·ε²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPredictions {
    pub mass_ratio: f64,
    pub bilap_ratio: f64,
    pub grad_ratio: f64,
}

impl ExpansionPredictions {
    pub fn new(n: usize, scalar_curvature: f64, a0: f64, f0: f64, laplacian_f0: f64) -> Self {
        let nf = n as f64;
        let d = nf * nf - 4.0;
        Self {
            mass_ratio: laplacian_f0 / (2.0 * (nf - 2.0) * f0) + scalar_curvature / (6.0 * (nf - 2.0)),
            bilap_ratio: (nf * nf + 4.0 * nf - 20.0) * scalar_curvature / (6.0 * d * (nf - 6.0)),
            grad_ratio: 4.0 * (nf - 1.0) * a0 / (d * (nf - 6.0)),
        }
    }
}

/// `−(n−4)/(n(n²−4) I_n^{n/2−1}) · ((2/n)S + a)`: the predicted coefficient of
/// `ε² log(1/ε²)` in `‖u_ε‖² / E` for `n = 6`.
pub fn log_regime_prediction(n: usize, scalar_curvature: f64, a0: f64) -> Result<f64> {
    let nf = n as f64;
    let i = i_pq(nf, nf / 2.0 - 1.0)?;
    Ok(-(nf - 4.0) / (nf * (nf * nf - 4.0) * i) * (2.0 / nf * scalar_curvature + a0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eps: f64,
    pub integrals: BubbleIntegrals,
    /// `∫|u_ε|^q`.
    pub lq_term: f64,
    /// `½‖u_ε‖² − (1/N)∫f|u_ε|^N`.
    pub bound: f64,
    /// `bound − (λ/q)∫|u_ε|^q`, the full `J_λ(u_ε)`.
    pub energy_with_lambda: f64,
    /// `c* − bound`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGapReport {
    pub c_star: f64,
    pub lambda: f64,
    pub q: f64,
    pub rows: Vec<GapRow>,
    /// Smallest and largest swept `ε` with `bound < c*`.
    pub smallest_eps_below: Option<f64>,
    pub largest_eps_below: Option<f64>,
    /// `bound(ε) ≈ c0 + c2 ε²` over the sweep.
    pub bound_fit: Option<ExpansionFit>,
}

/// Sweep `ε`, assemble the energy bound, and compare with `c*`.
pub fn threshold_gap_report(params: &BubbleParams, k0: f64, lambda: f64, q: f64, sweep: &[f64]) -> Result<ThresholdGapReport> {
    params.validate()?;
    if !(lambda >= 0.0) || !(q > 1.0 && q < 2.0) {
        return Err(Error::InvalidParameter("need lambda ≥ 0 and q in (1,2)".into()));
    }
    let n = params.n;
    let c_star = 2.0 / n as f64 * leading_coefficient(n, k0, params.f0);
    let rows = sweep
        .par_iter()
        .map(|&eps| {
            let p = params.with_eps(eps);
            let integrals = bubble_integrals(&p)?;
            let lq_term = bubble_lq(&p, q)?;
            let bound = integrals.energy_bound(n);
            Ok(GapRow {
                eps,
                integrals,
                lq_term,
                bound,
                energy_with_lambda: bound - lambda / q * lq_term,
                gap: c_star - bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let below: Vec<f64> = rows.iter().filter(|r| r.bound < c_star).map(|r| r.eps).collect();
    let data: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.bound)).collect();
    let power = ((n as f64) - 4.0).min(4.0);
    let bound_fit = if data.len() >= 5 {
        fit_expansion_with_remainder(&data, ExpansionModel::Eps2, power).ok()
    } else {
        fit_expansion(&data, ExpansionModel::Eps2).ok()
    };
    Ok(ThresholdGapReport {
        c_star,
        lambda,
        q,
        smallest_eps_below: below.iter().copied().reduce(f64::min),
        largest_eps_below: below.iter().copied().reduce(f64::max),
        rows,
        bound_fit,
    })
}
