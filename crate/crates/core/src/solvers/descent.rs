//! Projected Sobolev-gradient descent with limited-memory quasi-Newton
//! directions, on the reduced functional `Ĵ(u) = J(t*(u)·u)`.
//!
//! Every iterate lies on the Nehari set (large branch). All inner products
//! are taken in the descent metric `⟨u, v⟩ = ∫ u·P_c v`; the metric images of
//! the stored vectors are carried along so the two-loop recursion needs no
//! transforms.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{SignAudit, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::functionals::{evaluate_part, PointData};
use crate::nehari::{project_breakdown, project_to_nehari, Branch, Thresholds};
use crate::problem::{Problem, Sign};
use crate::spectral::{band_limited_noise, fixed_order_dot, spectral_tail, Field};

const MAX_RESEEDS: usize = 3;
const STALL_WINDOW: usize = 25;

struct Pair {
    s: Vec<f64>,
    pc_s: Vec<f64>,
    y: Vec<f64>,
    pc_y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    fixed_order_dot(a, b)
}

fn axpy_in_place(x: &mut [f64], a: f64, y: &[f64]) {
    x.par_iter_mut().zip(y.par_iter()).for_each(|(p, q)| *p += a * q);
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.par_iter().zip(b.par_iter()).map(|(p, q)| p - q).collect()
}

/// Quasi-Newton direction `−H g` and its metric image.
fn two_loop(g: &[f64], pc_g: &[f64], memory: &VecDeque<Pair>) -> (Vec<f64>, Vec<f64>) {
    let mut q = g.to_vec();
    let mut pc_q = pc_g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * dot(&p.s, &pc_q);
        axpy_in_place(&mut q, -a, &p.y);
        axpy_in_place(&mut pc_q, -a, &p.pc_y);
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.pc_y) / dot(&last.y, &last.pc_y);
        q.par_iter_mut().for_each(|v| *v *= gamma);
        pc_q.par_iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &pc_q);
        axpy_in_place(&mut q, a - b, &p.s);
        axpy_in_place(&mut pc_q, a - b, &p.pc_s);
    }
    q.par_iter_mut().for_each(|v| *v = -*v);
    pc_q.par_iter_mut().for_each(|v| *v = -*v);
    (q, pc_q)
}

/// Project `u0` onto the Nehari set, perturbing it with seeded band-limited
/// noise of growing amplitude when the ray misses (at most three times).
pub(crate) fn initial_projection(problem: &Problem, u0: &Field, sign: Option<Sign>, seed: u64) -> Result<(Field, usize)> {
    problem.grid().check_same(u0.grid())?;
    u0.check_finite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_f1e5);
    let mut u = u0.clone();
    let base = 0.5 * u0.max_abs().max(1.0);
    let mut reseeds = 0;
    loop {
        match project_to_nehari(problem, &u, sign, Branch::Large) {
            Ok(p) => return Ok((p.field, reseeds)),
            Err(e @ Error::RayMissesNehari { .. }) => {
                if reseeds == MAX_RESEEDS {
                    return Err(e);
                }
                reseeds += 1;
                let noise = band_limited_noise(*problem.grid(), 3, &mut rng);
                let amp = base * 4f64.powi(reseeds as i32 - 1);
                u = u0.axpy(amp, &noise)?;
            }
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn sign_audit(u: &Field, sign: Sign) -> SignAudit {
    let (min, max) = (u.min(), u.max());
    let tolerance = 1e-8;
    let passed = match sign {
        Sign::Plus => min >= -tolerance * max.max(0.0),
        Sign::Minus => max <= tolerance * (-min).max(0.0),
    };
    SignAudit {
        min,
        max,
        tolerance,
        passed,
    }
}

/// The shared minimisation loop for `J` and `J±`.
pub(crate) fn minimize(problem: &Problem, sign: Option<Sign>, u0: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let thresholds = Thresholds::compute(problem, &opts.thresholds)?;
    let mut warnings = Vec::new();
    let lam = problem.lambda();
    if !(lam > 0.0 && lam < thresholds.lambda_window()) {
        warnings.push(format!(
            "lambda = {lam:e} lies outside (0, min(lambda0, lambda1)) = (0, {:e})",
            thresholds.lambda_window()
        ));
    }
    let (u, reseeds) = initial_projection(problem, u0, sign, opts.seed)?;
    let h = problem.grid().cell_volume();
    let mut cur = PointData::new(problem, u, sign)?;
    let initial_energy = cur.energy.energy;
    let mut energy_trace = vec![cur.energy.energy];
    let mut residual_trace = vec![cur.residual_rel()];
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iters = 0;
    let mut stall = 0;
    let mut stalled = false;

    while residual_trace[residual_trace.len() - 1] > opts.tol_residual && iters < opts.max_iters {
        let g = cur.gradient.values();
        let pc_g = cur.residual.values();
        let mut accepted = None;
        // A quasi-Newton attempt first; on failure, steepest descent from scratch.
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !memory.is_empty();
            let (d, pc_d) = if use_memory {
                two_loop(g, pc_g, &memory)
            } else {
                (g.iter().map(|v| -v).collect(), pc_g.iter().map(|v| -v).collect())
            };
            let slope = dot(&d, pc_g) * h;
            if !(slope < 0.0) {
                continue;
            }
            let mut step = if use_memory { 1.0 } else { opts.step };
            for _ in 0..opts.max_backtracks {
                let w: Vec<f64> = cur
                    .u
                    .values()
                    .par_iter()
                    .zip(d.par_iter())
                    .map(|(u, d)| u + step * d)
                    .collect();
                let w = Field::new(*problem.grid(), w)?;
                let ew = evaluate_part(problem, &w, sign)?;
                if let Ok((t, ep)) = project_breakdown(&ew, problem, sign, Branch::Large) {
                    if ep.energy <= cur.energy.energy + opts.armijo * step * slope {
                        accepted = Some((w.scaled(t), d.clone(), pc_d.clone()));
                        break;
                    }
                }
                step *= opts.step_shrink;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }
        let Some((u_new, _, _)) = accepted else {
            stalled = true;
            warnings.push(format!(
                "line search failed at iteration {iters}; stopping at residual {:e}",
                residual_trace[residual_trace.len() - 1]
            ));
            break;
        };
        let next = PointData::new(problem, u_new, sign)?;
        if opts.memory > 0 {
            let s = diff(next.u.values(), cur.u.values());
            let pc_s = diff(next.pc_u.values(), cur.pc_u.values());
            let y = diff(next.gradient.values(), cur.gradient.values());
            let pc_y = diff(next.residual.values(), cur.residual.values());
            let sy = dot(&s, &pc_y);
            let yy = dot(&y, &pc_y);
            let ss = dot(&s, &pc_s);
            if sy > 1e-12 * (ss * yy).sqrt() {
                if memory.len() == opts.memory {
                    memory.pop_front();
                }
                memory.push_back(Pair { rho: 1.0 / sy, s, pc_s, y, pc_y });
            }
        }
        let drop = cur.energy.energy - next.energy.energy;
        if drop <= opts.tol_energy * next.energy.energy.abs() {
            stall += 1;
        } else {
            stall = 0;
        }
        cur = next;
        iters += 1;
        energy_trace.push(cur.energy.energy);
        residual_trace.push(cur.residual_rel());
        if stall >= STALL_WINDOW {
            stalled = true;
            warnings.push(format!("energy stalled for {STALL_WINDOW} iterations"));
            break;
        }
    }
    let residual_rel = residual_trace[residual_trace.len() - 1];
    let converged = residual_rel <= opts.tol_residual;
    if !converged && !stalled {
        warnings.push(format!("iteration cap {} reached", opts.max_iters));
    }
    if cur.energy.energy > initial_energy + opts.tol_energy * initial_energy.abs() {
        return Err(Error::Diverged(format!(
            "final energy {:e} exceeds the initial {:e}",
            cur.energy.energy, initial_energy
        )));
    }
    let norm = cur.energy.norm_sq.sqrt();
    if norm < thresholds.rho {
        warnings.push(format!("solution norm {norm:e} lies below rho = {:e}", thresholds.rho));
    }
    let audit = sign.map(|s| sign_audit(&cur.u, s));
    Ok(SolveReport {
        sign,
        energy: cur.energy,
        residual_rel,
        iters,
        converged,
        energy_trace,
        residual_trace,
        below_threshold: cur.energy.energy < thresholds.c_star,
        c_star: thresholds.c_star,
        rho: thresholds.rho,
        norm,
        spectral_tail: spectral_tail(&cur.u),
        min_u: cur.u.min(),
        max_u: cur.u.max(),
        sign_audit: audit,
        reseeds,
        warnings,
        u: cur.u,
    })
}
