//! Accelerated projected gradient on the reduced objective with densities
//! floored at `δ`. Slow but independent of the primal-dual machinery.

use super::problem::Problem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ReferenceReport {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
}

/// Euclidean projection onto `{x ≥ floor, Σ_{i∈C} m_i x_i = mass_C}`.
pub(crate) fn project_floored(problem: &Problem, v: &mut [f64], masses: &[f64], floor: f64) -> Result<()> {
    for (c, comp) in problem.members.iter().enumerate() {
        let m = &problem.m;
        let target = masses[c];
        let min_mass: f64 = comp.iter().map(|&i| m[i] * floor).sum();
        if min_mass > target * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "floor {floor:e} exceeds the mass of component {c}"
            )));
        }
        let mass_at = |lambda: f64| -> f64 { comp.iter().map(|&i| m[i] * (v[i] - lambda * m[i]).max(floor)).sum() };
        // mass_at is non-increasing in λ
        let mut lo = -1.0;
        while mass_at(lo) < target {
            lo *= 2.0;
        }
        let mut hi = 1.0;
        while mass_at(hi) > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mass_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        for &i in comp {
            v[i] = (v[i] - lambda * m[i]).max(floor);
        }
    }
    Ok(())
}

pub(crate) fn accelerated_gradient(
    problem: &Problem,
    nodes: &mut [Vec<f64>],
    floor: f64,
    max_iter: usize,
    tol_gap: f64,
    window: usize,
) -> Result<ReferenceReport> {
    let k = problem.intervals;
    let masses = problem.component_masses(&problem.rho0);
    for node in nodes.iter_mut().take(k).skip(1) {
        project_floored(problem, node, &masses, floor)?;
    }
    let eval = |x: &[Vec<f64>]| -> Result<(f64, Vec<Vec<f64>>)> {
        problem
            .objective(x)?
            .ok_or_else(|| Error::Domain("vanishing midpoint density".into()))
    };
    let mut x = nodes.to_vec();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let (mut fx, _) = eval(&x)?;
    let mut history = vec![fx];
    let mut report = ReferenceReport {
        iterations: 0,
        objective: fx,
        converged: false,
    };
    for iter in 0..max_iter {
        report.iterations = iter + 1;
        let (fy, gy) = eval(&y)?;
        let mut next;
        let mut fnext;
        loop {
            next = y.clone();
            for b in 1..k {
                for (xv, g) in next[b].iter_mut().zip(&gy[b - 1]) {
                    *xv -= g / lip;
                }
                project_floored(problem, &mut next[b], &masses, floor)?;
            }
            fnext = eval(&next)?.0;
            let mut lin = 0.0;
            let mut sq = 0.0;
            for b in 1..k {
                for i in 0..problem.n {
                    let d = next[b][i] - y[b][i];
                    lin += gy[b - 1][i] * d;
                    sq += d * d;
                }
            }
            if fnext <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() {
                break;
            }
            lip *= 2.0;
        }
        // restart when the objective goes up
        if fnext > fx {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for b in 1..k {
            for i in 0..problem.n {
                let d = next[b][i] - x[b][i];
                y[b][i] = next[b][i] + beta * d;
            }
            project_floored(problem, &mut y[b], &masses, floor)?;
        }
        x = next;
        fx = fnext;
        t = t_next;
        lip *= 0.9;
        report.objective = fx;
        history.push(fx);
        let h = history.len();
        if h > window && history[h - 1 - window] - fx <= tol_gap * fx.abs() {
            report.converged = true;
            break;
        }
    }
    nodes.clone_from_slice(&x);
    Ok(report)
}
