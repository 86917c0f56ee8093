//! Diagonally preconditioned primal-dual iteration.
//!
//! Primal variables are the interior densities and all momenta. The linear
//! map `A` sends them to space-time cells `(νᵏ_e, ρ̄ᵏ_i, ρ̄ᵏ_j)`; the action is
//! a sum of per-cell perspective-type functions, and the continuity equation
//! is an affine constraint handled by exact projection.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problem::Problem;
use super::prox::prox_cell;
use crate::error::Result;
use crate::numeric::BlockTridiag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PdhgSettings {
    pub max_iter: usize,
    pub tol_res: f64,
    pub tol_gap: f64,
    pub stall_window: usize,
    pub step_safety: f64,
    pub power_iterations: usize,
    pub seed: u64,
    pub cell_tol: f64,
    /// Stop early once residuals fall below this level (`0` disables).
    pub handoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PdhgReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// Largest increase of the primal objective between iterations.
    pub max_increase: f64,
    pub max_cell_kkt: f64,
    pub fallbacks: usize,
    pub operator_norm: f64,
    pub converged: bool,
    pub handed_off: bool,
}

pub(crate) struct Pdhg<'a> {
    p: &'a Problem,
    n_edges: usize,
    tau_rho: Vec<f64>,
    dropped: Vec<bool>,
    projector: BlockTridiag,
}

impl<'a> Pdhg<'a> {
    pub fn new(p: &'a Problem) -> Result<Self> {
        let n = p.n;
        let k = p.intervals;
        let mut degree = vec![0usize; n];
        for &(i, j) in &p.pairs {
            degree[i] += 1;
            degree[j] += 1;
        }
        let tau_rho: Vec<f64> = degree.iter().map(|&d| 1.0 / d.max(1) as f64).collect();
        // one redundant continuity row per component, dropped at the last step
        let mut dropped = vec![false; n];
        for comp in &p.members {
            dropped[comp[0]] = true;
        }
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for &(i, j) in &p.pairs {
            lap[(i, i)] += 1.0;
            lap[(j, j)] += 1.0;
            lap[(i, j)] -= 1.0;
            lap[(j, i)] -= 1.0;
        }
        let dt2 = p.dt * p.dt;
        let kept: Vec<usize> = (0..n).filter(|&i| !dropped[i]).collect();
        let mut diag = Vec::with_capacity(k);
        let mut lower = Vec::with_capacity(k.saturating_sub(1));
        for step in 1..=k {
            let mut block = &lap * dt2;
            for i in 0..n {
                let mut c = 0.0;
                if step < k {
                    c += tau_rho[i];
                }
                if step > 1 {
                    c += tau_rho[i];
                }
                block[(i, i)] += p.m[i] * p.m[i] * c;
            }
            if step == k {
                block = block.select_rows(&kept).select_columns(&kept);
            }
            diag.push(block);
            if step < k {
                let mut coupling = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    coupling[(i, i)] = -p.m[i] * p.m[i] * tau_rho[i];
                }
                if step + 1 == k {
                    coupling = coupling.select_rows(&kept);
                }
                lower.push(coupling);
            }
        }
        let projector = BlockTridiag::factor(diag, lower)?;
        Ok(Pdhg {
            p,
            n_edges: p.pairs.len(),
            tau_rho,
            dropped,
            projector,
        })
    }

    fn node<'b>(&'b self, rho: &'b [f64], step: usize) -> &'b [f64] {
        let n = self.p.n;
        if step == 0 {
            &self.p.rho0
        } else if step == self.p.intervals {
            &self.p.rho1
        } else {
            &rho[(step - 1) * n..step * n]
        }
    }

    /// Cell values `A x + a₀`, laid out as `[w, s, t]` per cell.
    fn forward(&self, rho: &[f64], nu: &[f64], out: &mut [f64]) {
        let e_count = self.n_edges;
        for step in 1..=self.p.intervals {
            let prev = self.node(rho, step - 1);
            let next = self.node(rho, step);
            for (e, &(i, j)) in self.p.pairs.iter().enumerate() {
                let c = 3 * ((step - 1) * e_count + e);
                out[c] = nu[(step - 1) * e_count + e];
                out[c + 1] = 0.5 * (prev[i] + next[i]);
                out[c + 2] = 0.5 * (prev[j] + next[j]);
            }
        }
    }

    /// Linear part of `A` applied to a primal difference (endpoints zero).
    fn forward_linear(&self, drho: &[f64], dnu: &[f64], out: &mut [f64]) {
        let n = self.p.n;
        let k = self.p.intervals;
        let e_count = self.n_edges;
        let at = |step: usize, i: usize| -> f64 {
            if step == 0 || step == k {
                0.0
            } else {
                drho[(step - 1) * n + i]
            }
        };
        for step in 1..=k {
            for (e, &(i, j)) in self.p.pairs.iter().enumerate() {
                let c = 3 * ((step - 1) * e_count + e);
                out[c] = dnu[(step - 1) * e_count + e];
                out[c + 1] = 0.5 * (at(step - 1, i) + at(step, i));
                out[c + 2] = 0.5 * (at(step - 1, j) + at(step, j));
            }
        }
    }

    fn adjoint(&self, y: &[f64], rho_out: &mut [f64], nu_out: &mut [f64]) {
        let n = self.p.n;
        let k = self.p.intervals;
        let e_count = self.n_edges;
        rho_out.iter_mut().for_each(|v| *v = 0.0);
        for step in 1..=k {
            for (e, &(i, j)) in self.p.pairs.iter().enumerate() {
                let c = 3 * ((step - 1) * e_count + e);
                nu_out[(step - 1) * e_count + e] = y[c];
                for node in [step - 1, step] {
                    if node >= 1 && node < k {
                        rho_out[(node - 1) * n + i] += 0.5 * y[c + 1];
                        rho_out[(node - 1) * n + j] += 0.5 * y[c + 2];
                    }
                }
            }
        }
    }

    /// Projection onto the continuity equation in the metric `T⁻¹`.
    fn project(&self, rho: &mut [f64], nu: &mut [f64]) {
        let n = self.p.n;
        let k = self.p.intervals;
        let e_count = self.n_edges;
        let dt = self.p.dt;
        let mut resid = vec![0.0; k * n];
        for step in 1..=k {
            let prev = self.node(rho, step - 1).to_vec();
            let next = self.node(rho, step).to_vec();
            let row = &mut resid[(step - 1) * n..step * n];
            for i in 0..n {
                row[i] = (next[i] - prev[i]) * self.p.m[i];
            }
            for (e, &(i, j)) in self.p.pairs.iter().enumerate() {
                let v = nu[(step - 1) * e_count + e];
                row[i] += dt * v;
                row[j] -= dt * v;
            }
        }
        let mut packed: Vec<f64> = resid[..(k - 1) * n].to_vec();
        packed.extend((0..n).filter(|&i| !self.dropped[i]).map(|i| resid[(k - 1) * n + i]));
        self.projector.solve(&mut packed);
        let mut lambda = vec![0.0; k * n];
        lambda[..(k - 1) * n].copy_from_slice(&packed[..(k - 1) * n]);
        let mut cursor = (k - 1) * n;
        for i in 0..n {
            if !self.dropped[i] {
                lambda[(k - 1) * n + i] = packed[cursor];
                cursor += 1;
            }
        }
        for step in 1..k {
            for i in 0..n {
                let ct = self.p.m[i] * (lambda[(step - 1) * n + i] - lambda[step * n + i]);
                rho[(step - 1) * n + i] -= self.tau_rho[i] * ct;
            }
        }
        for step in 1..=k {
            for (e, &(i, j)) in self.p.pairs.iter().enumerate() {
                let ct = dt * (lambda[(step - 1) * n + i] - lambda[(step - 1) * n + j]);
                nu[(step - 1) * e_count + e] -= ct;
            }
        }
    }

    /// Power iteration for `‖Σ^{1/2} A T^{1/2}‖`.
    fn operator_norm(&self, sigma: &[f64], steps: usize, seed: u64) -> f64 {
        let n_rho = (self.p.intervals - 1) * self.p.n;
        let n_nu = self.p.intervals * self.n_edges;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xr: Vec<f64> = (0..n_rho).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut xn: Vec<f64> = (0..n_nu).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut y = vec![0.0; sigma.len()];
        let mut est = 0.0;
        for _ in 0..steps {
            let norm = xr.iter().chain(&xn).map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            xr.iter_mut().chain(xn.iter_mut()).for_each(|v| *v /= norm);
            let sr: Vec<f64> = (0..n_rho).map(|a| xr[a] * self.tau_rho[a % self.p.n].sqrt()).collect();
            self.forward_linear(&sr, &xn, &mut y);
            for (v, s) in y.iter_mut().zip(sigma) {
                *v *= s;
            }
            let mut ar = vec![0.0; n_rho];
            let mut an = vec![0.0; n_nu];
            self.adjoint(&y, &mut ar, &mut an);
            for a in 0..n_rho {
                ar[a] *= self.tau_rho[a % self.p.n].sqrt();
            }
            est = ar
                .iter()
                .zip(&xr)
                .chain(an.iter().zip(&xn))
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .sqrt();
            xr = ar;
            xn = an;
        }
        est
    }

    /// Runs the iteration from `rho` (interior nodes, flattened) with zero
    /// momentum. On return `rho`, `nu` hold the last primal iterate and
    /// `cells` the last proximal outputs.
    pub fn run(&self, rho: &mut Vec<f64>, nu: &mut Vec<f64>, settings: &PdhgSettings) -> PdhgReport {
        let p = self.p;
        let k = p.intervals;
        let n = p.n;
        let e_count = self.n_edges;
        let n_cells = k * e_count;
        // dual weights: s/t rows touching a fixed endpoint have one free term
        let mut sigma = vec![1.0; 3 * n_cells];
        for step in 1..=k {
            let w = if k == 1 {
                1.0
            } else if step == 1 || step == k {
                2.0
            } else {
                1.0
            };
            for e in 0..e_count {
                let c = 3 * ((step - 1) * e_count + e);
                sigma[c + 1] = w;
                sigma[c + 2] = w;
            }
        }
        let cost: Vec<f64> = p.gamma.iter().map(|g| p.dt / g).collect();
        let norm = if k > 1 || e_count > 0 {
            self.operator_norm(&sigma, settings.power_iterations, settings.seed)
        } else {
            0.0
        };
        let safety = settings.step_safety / norm.max(1e-12);

        *nu = vec![0.0; n_cells];
        self.project(rho, nu);
        let mut y = vec![0.0; 3 * n_cells];
        let mut cells = vec![0.0; 3 * n_cells];
        self.forward(rho, nu, &mut cells);
        let mut balance = 1.0;
        let mut adapt = 0.5;
        let mut history: Vec<f64> = Vec::new();
        let mut report = PdhgReport {
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            objective: f64::INFINITY,
            max_increase: 0.0,
            max_cell_kkt: 0.0,
            fallbacks: 0,
            operator_norm: norm,
            converged: false,
            handed_off: false,
        };
        let mut grad_rho = vec![0.0; rho.len()];
        let mut grad_nu = vec![0.0; n_cells];
        let mut ax = vec![0.0; 3 * n_cells];
        let mut dx_cells = vec![0.0; 3 * n_cells];
        for iter in 0..settings.max_iter {
            let tau_scale = safety * balance;
            let sigma_scale = safety / balance;
            let rho_old = rho.clone();
            let nu_old = nu.clone();
            self.adjoint(&y, &mut grad_rho, &mut grad_nu);
            for a in 0..rho.len() {
                rho[a] -= tau_scale * self.tau_rho[a % n] * grad_rho[a];
            }
            for a in 0..n_cells {
                nu[a] -= tau_scale * grad_nu[a];
            }
            self.project(rho, nu);
            let bar_rho: Vec<f64> = rho.iter().zip(&rho_old).map(|(x, o)| 2.0 * x - o).collect();
            let bar_nu: Vec<f64> = nu.iter().zip(&nu_old).map(|(x, o)| 2.0 * x - o).collect();
            self.forward(&bar_rho, &bar_nu, &mut ax);
            let y_old = y.clone();
            let mut objective = 0.0;
            let mut worst_kkt: f64 = 0.0;
            for cell in 0..n_cells {
                let c = 3 * cell;
                let sw = sigma_scale * sigma[c];
                let ss = sigma_scale * sigma[c + 1];
                let st = sigma_scale * sigma[c + 2];
                let v = [y[c] + sw * ax[c], y[c + 1] + ss * ax[c + 1], y[c + 2] + st * ax[c + 2]];
                let u = [v[0] / sw, v[1] / ss, v[2] / st];
                let e = cell % e_count;
                let out = prox_cell(
                    p.mean,
                    cost[e],
                    [sw, ss, st],
                    u,
                    (cells[c + 1], cells[c + 2]),
                    settings.cell_tol,
                );
                worst_kkt = worst_kkt.max(out.kkt);
                if out.fallback {
                    report.fallbacks += 1;
                }
                cells[c] = out.w;
                cells[c + 1] = out.s;
                cells[c + 2] = out.t;
                y[c] = v[0] - sw * out.w;
                y[c + 1] = v[1] - ss * out.s;
                y[c + 2] = v[2] - st * out.t;
                let th = p.mean.theta(out.s, out.t);
                if out.w != 0.0 {
                    objective += cost[e] * out.w * out.w / th;
                }
            }
            report.max_cell_kkt = worst_kkt;
            // residuals
            let dy: Vec<f64> = y_old.iter().zip(&y).map(|(a, b)| a - b).collect();
            let drho: Vec<f64> = rho_old.iter().zip(rho.iter()).map(|(a, b)| a - b).collect();
            let dnu: Vec<f64> = nu_old.iter().zip(nu.iter()).map(|(a, b)| a - b).collect();
            let mut aty_rho = vec![0.0; rho.len()];
            let mut aty_nu = vec![0.0; n_cells];
            self.adjoint(&dy, &mut aty_rho, &mut aty_nu);
            let mut primal: f64 = 0.0;
            for a in 0..rho.len() {
                primal = primal.max((drho[a] / (tau_scale * self.tau_rho[a % n]) - aty_rho[a]).abs());
            }
            for a in 0..n_cells {
                primal = primal.max((dnu[a] / tau_scale - aty_nu[a]).abs());
            }
            self.forward_linear(&drho, &dnu, &mut dx_cells);
            let mut dual: f64 = 0.0;
            for a in 0..3 * n_cells {
                dual = dual.max((dy[a] / (sigma_scale * sigma[a]) - dx_cells[a]).abs());
            }
            if let Some(&last) = history.last() {
                let inc: f64 = objective - last;
                report.max_increase = report.max_increase.max(inc);
            }
            history.push(objective);
            report.iterations = iter + 1;
            report.primal_residual = primal;
            report.dual_residual = dual;
            report.objective = objective;
            let res = primal.max(dual);
            if settings.handoff > 0.0 && res <= settings.handoff && iter >= 10 {
                report.handed_off = true;
                break;
            }
            if res <= settings.tol_res && history.len() > settings.stall_window {
                let before = history[history.len() - 1 - settings.stall_window];
                if (objective - before).abs() <= settings.tol_gap * objective.abs().max(1e-300) {
                    report.converged = true;
                    break;
                }
            }
            // residual balancing
            if adapt > 1e-3 {
                if primal > 1.5 * dual {
                    balance /= 1.0 - adapt;
                    adapt *= 0.95;
                } else if dual > 1.5 * primal {
                    balance *= 1.0 - adapt;
                    adapt *= 0.95;
                }
            }
        }
        report
    }
}
