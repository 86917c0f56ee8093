//! Newton iteration on the reduced (density-only) objective.
//!
//! The Hessian is block tridiagonal in time; each Newton system is solved in
//! the mass-preserving subspace with a block Cholesky factorization. Steps
//! keep every density positive (fraction to boundary) and satisfy an Armijo
//! decrease condition, so the objective is non-increasing.

use nalgebra::{DMatrix, DVector};

use super::problem::Problem;
use crate::error::{Error, Result};
use crate::numeric::BlockTridiag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NewtonReport {
    pub iterations: usize,
    pub objective: f64,
    /// Sup norm of the projected gradient at the final iterate.
    pub gradient: f64,
    /// Half the squared Newton decrement at the last step.
    pub decrement: f64,
    pub converged: bool,
}

const FRACTION_TO_BOUNDARY: f64 = 0.99;
const ARMIJO: f64 = 1e-4;
const EXHAUSTED: f64 = 1e-28;
const LOCAL: f64 = 1e-8;

pub(crate) fn newton(problem: &Problem, nodes: &mut [Vec<f64>], max_iter: usize, tol: f64) -> Result<NewtonReport> {
    let k = problem.intervals;
    let n = problem.n;
    if k < 2 {
        let (objective, _) = problem
            .objective(nodes)?
            .ok_or_else(|| Error::Domain("endpoint midpoints vanish".into()))?;
        return Ok(NewtonReport {
            iterations: 0,
            objective,
            gradient: 0.0,
            decrement: 0.0,
            converged: true,
        });
    }
    let basis = problem.null_basis();
    let r = basis.ncols();
    let mut report = NewtonReport {
        iterations: 0,
        objective: f64::INFINITY,
        gradient: f64::INFINITY,
        decrement: f64::INFINITY,
        converged: false,
    };
    if r == 0 {
        report.converged = true;
        report.objective = problem.objective(nodes)?.map(|(v, _)| v).unwrap_or(f64::INFINITY);
        return Ok(report);
    }
    let mut previous = f64::INFINITY;
    for iter in 0..max_iter {
        report.iterations = iter;
        let mut value = 0.0;
        let mut grad = vec![vec![0.0; n]; k - 1];
        let mut diag = vec![DMatrix::<f64>::zeros(n, n); k - 1];
        let mut lower = vec![DMatrix::<f64>::zeros(n, n); k.saturating_sub(2)];
        for step in 1..=k {
            let ev = problem
                .interval(&nodes[step - 1], &nodes[step], true)?
                .ok_or_else(|| Error::Domain("vanishing midpoint density".into()))?;
            value += ev.value;
            let (xx, xy, yy) = ev.hess.expect("hessian requested");
            if step >= 2 {
                for (g, d) in grad[step - 2].iter_mut().zip(&ev.grad_prev) {
                    *g += d;
                }
                diag[step - 2] += &xx;
            }
            if step < k {
                for (g, d) in grad[step - 1].iter_mut().zip(&ev.grad_next) {
                    *g += d;
                }
                diag[step - 1] += &yy;
            }
            if step >= 2 && step < k {
                // couples node step (rows) to node step-1 (cols)
                lower[step - 2] += xy.transpose();
            }
        }
        report.objective = value;
        let red_grad: Vec<DVector<f64>> = grad
            .iter()
            .map(|g| basis.transpose() * DVector::from_column_slice(g))
            .collect();
        report.gradient = red_grad.iter().map(|g| g.amax()).fold(0.0, f64::max);

        let red_diag: Vec<DMatrix<f64>> = diag.iter().map(|d| basis.transpose() * d * &basis).collect();
        let red_lower: Vec<DMatrix<f64>> = lower.iter().map(|l| basis.transpose() * l * &basis).collect();
        let scale = red_diag.iter().map(|d| d.amax()).fold(0.0, f64::max).max(1e-300);
        let mut rhs: Vec<f64> = red_grad.iter().flat_map(|g| g.iter().map(|x| -x)).collect();
        let mut damping = 0.0;
        let factor = loop {
            let shifted: Vec<DMatrix<f64>> = red_diag
                .iter()
                .map(|d| d + DMatrix::<f64>::identity(r, r) * damping)
                .collect();
            match BlockTridiag::factor(shifted, red_lower.clone()) {
                Ok(f) => break f,
                Err(_) if damping < scale => {
                    damping = if damping == 0.0 { 1e-12 * scale } else { damping * 100.0 };
                }
                Err(e) => return Err(e),
            }
        };
        factor.solve(&mut rhs);
        let dirs: Vec<DVector<f64>> = (0..k - 1)
            .map(|b| &basis * DVector::from_column_slice(&rhs[b * r..(b + 1) * r]))
            .collect();
        let slope: f64 = grad
            .iter()
            .zip(&dirs)
            .map(|(g, d)| g.iter().zip(d.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        report.decrement = -0.5 * slope;
        report.converged = report.decrement <= tol * value.max(1e-300) || report.gradient == 0.0;
        // keep going past `tol` while steps still make representable progress
        if report.decrement <= EXHAUSTED * value.max(1e-300) || slope >= 0.0 {
            return Ok(report);
        }
        // in the quadratic regime the decrement must keep shrinking
        let local = report.decrement <= LOCAL * value;
        if local && report.decrement > 0.1 * previous {
            return Ok(report);
        }
        previous = report.decrement;
        let mut alpha: f64 = 1.0;
        for (b, d) in dirs.iter().enumerate() {
            for (x, dx) in nodes[b + 1].iter().zip(d.iter()) {
                if *dx < 0.0 {
                    alpha = alpha.min(FRACTION_TO_BOUNDARY * x / -dx);
                }
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = nodes
                .iter()
                .enumerate()
                .map(|(idx, node)| {
                    if idx == 0 || idx == k {
                        node.clone()
                    } else {
                        node.iter()
                            .zip(dirs[idx - 1].iter())
                            .map(|(x, d)| x + alpha * d)
                            .collect()
                    }
                })
                .collect();
            if let Some((v, _)) = problem.objective(&trial)? {
                // near the minimizer decreases fall below rounding; accept
                // full steps that do not visibly increase the objective
                if v <= value + ARMIJO * alpha * slope || (local && v <= value + 1e-13 * value.abs()) {
                    nodes.clone_from_slice(&trial);
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no representable decrease left
            return Ok(report);
        }
    }
    report.iterations = max_iter;
    Ok(report)
}
