//! Mountain-pass search between two signed minimisers.
//!
//! A discrete string of Nehari points joins `u⁻` to `u⁺`. Interior nodes take
//! one projected gradient step each sweep, after which the string is
//! redistributed to equal arclength in the descent metric and re-projected.
//! The highest node is then refined by a climbing image: the gradient
//! component along the frozen local tangent is reversed, so the node ascends
//! along the path while descending transversally.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PathOptions, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::functionals::PointData;
use crate::nehari::{project_to_nehari, Branch, Thresholds};
use crate::problem::Problem;
use crate::spectral::{band_limited_noise, fixed_order_dot, spectral_tail, Field};

/// Outcome of the string phase and of the saddle refinement.
#[derive(Clone, Debug, Serialize)]
pub struct PathReport {
    #[serde(skip)]
    pub nodes: Vec<Field>,
    pub energies: Vec<f64>,
    /// `max_i J(node_i)` after the last sweep.
    pub c_lambda: f64,
    pub c_lambda_trace: Vec<f64>,
    pub string_iters: usize,
    /// Relative transverse gradient at the highest node after the last sweep.
    pub transverse_gradient: f64,
    pub saddle_index: usize,
    pub climb_iters: usize,
    pub climb_energy_trace: Vec<f64>,
    pub climb_residual_trace: Vec<f64>,
    pub saddle: SolveReport,
    /// The string is projected node by node; no continuous path is certified.
    pub nodewise_projection: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub level: f64,
    pub c_star: f64,
    pub margin: f64,
    pub passed: bool,
}

/// `level < c*`, reported with its margin.
pub fn verify_palais_smale_level(level: f64, thresholds: &Thresholds) -> LevelCheck {
    let margin = thresholds.c_star - level;
    LevelCheck {
        level,
        c_star: thresholds.c_star,
        margin,
        passed: margin > 0.0,
    }
}

fn h(u: &Field) -> f64 {
    u.grid().cell_volume()
}

/// `‖a − b‖` in the metric, from the stored `P_c` images.
fn metric_distance(a: &PointData, b: &PointData) -> f64 {
    let d = a.u.sub(&b.u).expect("same grid");
    let pd = a.pc_u.sub(&b.pc_u).expect("same grid");
    (fixed_order_dot(d.values(), pd.values()) * h(&a.u)).max(0.0).sqrt()
}

fn project(problem: &Problem, u: &Field) -> Result<PointData> {
    let p = project_to_nehari(problem, u, None, Branch::Large)?;
    PointData::new(problem, p.field, None)
}

/// Unit tangent at `x` from its neighbours, made metric-orthogonal to `x`
/// (the Nehari scaling direction). Returns `(τ, P_c τ)`.
fn tangent(prev: &PointData, x: &PointData, next: &PointData) -> (Field, Field) {
    let hh = h(&x.u);
    let mut t = next.u.sub(&prev.u).expect("same grid");
    let mut pt = next.pc_u.sub(&prev.pc_u).expect("same grid");
    let xx = fixed_order_dot(x.u.values(), x.pc_u.values());
    if xx > 0.0 {
        let c = fixed_order_dot(t.values(), x.pc_u.values()) / xx;
        t = t.axpy(-c, &x.u).expect("same grid");
        pt = pt.axpy(-c, &x.pc_u).expect("same grid");
    }
    let norm = (fixed_order_dot(t.values(), pt.values()) * hh).max(0.0).sqrt();
    if norm > 0.0 {
        (t.scaled(1.0 / norm), pt.scaled(1.0 / norm))
    } else {
        (t, pt)
    }
}

fn interior_argmax(energies: &[f64]) -> Result<usize> {
    let k = energies.len();
    let (imax, emax) = energies[1..k - 1]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, be), (i, &e)| if e > be { (i + 1, e) } else { (bi, be) });
    if !(emax > energies[0] && emax > energies[k - 1]) {
        return Err(Error::NoInteriorBarrier);
    }
    Ok(imax)
}

/// Equal-arclength redistribution followed by re-projection.
fn reparameterize(problem: &Problem, nodes: &[PointData]) -> Result<Vec<PointData>> {
    let k = nodes.len();
    let mut cum = vec![0.0; k];
    for i in 1..k {
        cum[i] = cum[i - 1] + metric_distance(&nodes[i], &nodes[i - 1]);
    }
    let total = cum[k - 1];
    if !(total > 0.0) {
        return Err(Error::Diverged("string collapsed to a point".into()));
    }
    let mut out = Vec::with_capacity(k);
    out.push(nodes[0].clone());
    let mut seg = 0;
    for j in 1..k - 1 {
        let target = total * j as f64 / (k - 1) as f64;
        while seg + 1 < k - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { ((target - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let u = nodes[seg].u.scaled(1.0 - w).axpy(w, &nodes[seg + 1].u)?;
        out.push(project(problem, &u)?);
    }
    out.push(nodes[k - 1].clone());
    Ok(out)
}

fn transverse_gradient(prev: &PointData, x: &PointData, next: &PointData) -> f64 {
    let hh = h(&x.u);
    let (t, pt) = tangent(prev, x, next);
    let gt = fixed_order_dot(x.gradient.values(), pt.values()) * hh;
    let g_perp = x.gradient.axpy(-gt, &t).expect("same grid");
    let pg_perp = x.residual.axpy(-gt, &pt).expect("same grid");
    let num = (fixed_order_dot(g_perp.values(), pg_perp.values()) * hh).max(0.0).sqrt();
    let den = x.energy.norm_sq.sqrt();
    num / den
}

/// String method between `u_minus` and `u_plus`, then climbing-image
/// refinement of the highest node.
pub fn mountain_pass(
    problem: &Problem,
    u_plus: &Field,
    u_minus: &Field,
    opts: &SolveOptions,
    path: &PathOptions,
) -> Result<PathReport> {
    opts.validate()?;
    path.validate()?;
    problem.grid().check_same(u_plus.grid())?;
    problem.grid().check_same(u_minus.grid())?;
    let thresholds = Thresholds::compute(problem, &opts.thresholds)?;
    let k = path.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9a7b_5eed);
    // Endpoints are kept exactly as given.
    let end_minus = PointData::new(problem, u_minus.clone(), None)?;
    let end_plus = PointData::new(problem, u_plus.clone(), None)?;

    // Straight chord plus a bump that keeps the midpoint off the origin when
    // the endpoints are (nearly) antipodal.
    let noise = band_limited_noise(*problem.grid(), 2, &mut rng);
    let scale = 0.5 * (end_plus.u.max_abs() + end_minus.u.max_abs()) * path.bump_amplitude;
    let mut nodes = Vec::with_capacity(k);
    nodes.push(end_minus);
    for i in 1..k - 1 {
        let s = i as f64 / (k - 1) as f64;
        let bump = (std::f64::consts::PI * s).sin() * scale;
        let u = nodes[0]
            .u
            .scaled(1.0 - s)
            .axpy(s, &end_plus.u)?
            .axpy(bump, &noise)?;
        nodes.push(project(problem, &u)?);
    }
    nodes.push(end_plus);

    let mut c_lambda_trace = Vec::new();
    let mut string_iters = 0;
    let mut transverse = f64::INFINITY;
    for it in 0..path.max_iters {
        let mut next = Vec::with_capacity(k);
        next.push(nodes[0].clone());
        for node in &nodes[1..k - 1] {
            let u = node.u.axpy(-path.step, &node.gradient)?;
            next.push(project(problem, &u)?);
        }
        next.push(nodes[k - 1].clone());
        nodes = reparameterize(problem, &next)?;
        string_iters = it + 1;
        let energies: Vec<f64> = nodes.iter().map(|p| p.energy.energy).collect();
        let imax = interior_argmax(&energies)?;
        c_lambda_trace.push(energies[imax]);
        transverse = transverse_gradient(&nodes[imax - 1], &nodes[imax], &nodes[imax + 1]);
        if transverse <= path.tol_string {
            break;
        }
    }
    let energies: Vec<f64> = nodes.iter().map(|p| p.energy.energy).collect();
    let saddle_index = interior_argmax(&energies)?;
    let c_lambda = energies[saddle_index];

    // Climbing image against the frozen neighbours.
    let prev = nodes[saddle_index - 1].clone();
    let next = nodes[saddle_index + 1].clone();
    let mut x = nodes[saddle_index].clone();
    let mut step = path.climb_step;
    let mut climb_energy_trace = vec![x.energy.energy];
    let mut climb_residual_trace = vec![x.residual_rel()];
    let mut climb_iters = 0;
    let mut warnings = Vec::new();
    let hh = problem.grid().cell_volume();
    let force = |x: &PointData| -> Result<Field> {
        let (t, pt) = tangent(&prev, x, &next);
        let gt = fixed_order_dot(x.gradient.values(), pt.values()) * hh;
        x.gradient.scaled(-1.0).axpy(2.0 * gt, &t)
    };
    let mut f = force(&x)?;
    while climb_residual_trace[climb_residual_trace.len() - 1] > path.tol_saddle && climb_iters < path.climb_max_iters {
        let trial = x.u.axpy(step, &f).and_then(|u| project(problem, &u));
        let res_now = x.residual_rel();
        match trial {
            Ok(y) if y.residual_rel() <= 1.5 * res_now => {
                x = y;
                f = force(&x)?;
                step = (step * 1.1).min(path.climb_step_max);
                climb_iters += 1;
                climb_energy_trace.push(x.energy.energy);
                climb_residual_trace.push(x.residual_rel());
            }
            _ => {
                step *= 0.5;
                if step < 1e-10 {
                    warnings.push("climbing step underflow".to_string());
                    break;
                }
            }
        }
    }
    let residual_rel = x.residual_rel();
    let converged = residual_rel <= path.tol_saddle;
    if !converged {
        warnings.push(format!("saddle refinement stopped at residual {residual_rel:e}"));
    }
    let norm = x.energy.norm_sq.sqrt();
    let saddle = SolveReport {
        sign: None,
        energy: x.energy,
        residual_rel,
        iters: climb_iters,
        converged,
        energy_trace: climb_energy_trace.clone(),
        residual_trace: climb_residual_trace.clone(),
        below_threshold: x.energy.energy < thresholds.c_star,
        c_star: thresholds.c_star,
        rho: thresholds.rho,
        norm,
        spectral_tail: spectral_tail(&x.u),
        min_u: x.u.min(),
        max_u: x.u.max(),
        sign_audit: None,
        reseeds: 0,
        warnings,
        u: x.u.clone(),
    };
    Ok(PathReport {
        energies,
        c_lambda,
        c_lambda_trace,
        string_iters,
        transverse_gradient: transverse,
        saddle_index,
        climb_iters,
        climb_energy_trace,
        climb_residual_trace,
        saddle,
        nodewise_projection: true,
        nodes: nodes.into_iter().map(|p| p.u).collect(),
    })
}
