//! Discretized geodesic problem shared by the solvers.
//!
//! Densities live at `K + 1` nodes `ρ⁰..ρᴷ` (endpoints fixed); interval `k`
//! uses the midpoint `ρ̄ᵏ` in the action and the continuity equation
//! `(ρᵏ − ρᵏ⁻¹) m + Δt·div νᵏ = 0`.
//!
//! Eliminating the momentum gives the reduced objective
//! `Φ(ρ) = Σ_k Δt · bₖᵀ L(ρ̄ᵏ)⁺ bₖ` with `bₖ = (ρᵏ⁻¹ − ρᵏ) m / Δt` and
//! `L(ρ̄)` the graph Laplacian with weights `γ_e θ(ρ̄_i, ρ̄_j)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::means::Mean;

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    pub gamma: Vec<f64>,
    pub m: Vec<f64>,
    pub mean: Mean,
    pub intervals: usize,
    pub dt: f64,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    /// Component label per state.
    pub labels: Vec<usize>,
    pub n_components: usize,
    /// Members of each component, in increasing order.
    pub members: Vec<Vec<usize>>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pairs: Vec<(usize, usize)>,
        gamma: Vec<f64>,
        m: Vec<f64>,
        labels: Vec<usize>,
        mean: Mean,
        intervals: usize,
        horizon: f64,
        rho0: Vec<f64>,
        rho1: Vec<f64>,
    ) -> Self {
        let n = m.len();
        let mut relabel = vec![usize::MAX; n.max(1)];
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut dense_labels = vec![0; n];
        for i in 0..n {
            let l = labels[i];
            if relabel[l] == usize::MAX {
                relabel[l] = members.len();
                members.push(Vec::new());
            }
            dense_labels[i] = relabel[l];
            members[relabel[l]].push(i);
        }
        Problem {
            n,
            pairs,
            gamma,
            m,
            mean,
            intervals,
            dt: horizon / intervals as f64,
            rho0,
            rho1,
            n_components: members.len(),
            labels: dense_labels,
            members,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.intervals as f64
    }

    pub fn component_masses(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_components];
        for i in 0..self.n {
            out[self.labels[i]] += rho[i] * self.m[i];
        }
        out
    }

    /// Largest mismatch of component masses between the endpoints.
    pub fn mass_gap(&self) -> f64 {
        let a = self.component_masses(&self.rho0);
        let b = self.component_masses(&self.rho1);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Node densities of the straight line between the endpoints.
    pub fn linear_path(&self) -> Vec<Vec<f64>> {
        let k = self.intervals;
        (0..=k)
            .map(|step| {
                let t = step as f64 / k as f64;
                self.rho0
                    .iter()
                    .zip(&self.rho1)
                    .map(|(a, b)| if step == k { *b } else { (1.0 - t) * a + t * b })
                    .collect()
            })
            .collect()
    }

    /// Orthonormal basis (columns) of `{x : Σ_{i∈C} m_i x_i = 0 for every component C}`.
    pub fn null_basis(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut proj = DMatrix::<f64>::identity(n, n);
        for comp in &self.members {
            let norm: f64 = comp.iter().map(|&i| self.m[i] * self.m[i]).sum::<f64>().sqrt();
            for &i in comp {
                for &j in comp {
                    proj[(i, j)] -= self.m[i] * self.m[j] / (norm * norm);
                }
            }
        }
        let eig = SymmetricEigen::new(proj);
        let keep: Vec<usize> = (0..n).filter(|&a| eig.eigenvalues[a] > 0.5).collect();
        let mut basis = DMatrix::<f64>::zeros(n, keep.len());
        for (c, &a) in keep.iter().enumerate() {
            basis.set_column(c, &eig.eigenvectors.column(a));
        }
        basis
    }

    /// Component-wise averaging projector scaled by `shift`, added to a
    /// Laplacian to make it invertible without changing it on its range.
    fn add_kernel_shift(&self, lap: &mut DMatrix<f64>, shift: f64) {
        for comp in &self.members {
            let w = shift / comp.len() as f64;
            for &i in comp {
                for &j in comp {
                    lap[(i, j)] += w;
                }
            }
        }
    }

    /// Removes the per-component mean of a vector that should sum to zero
    /// on each component.
    pub fn center(&self, v: &mut [f64]) {
        for comp in &self.members {
            let avg = comp.iter().map(|&i| v[i]).sum::<f64>() / comp.len() as f64;
            for &i in comp {
                v[i] -= avg;
            }
        }
    }

    /// Evaluates interval `(prev, next)`. Returns `None` when some midpoint
    /// weight vanishes.
    pub fn interval(&self, prev: &[f64], next: &[f64], hessian: bool) -> Result<Option<IntervalEval>> {
        let n = self.n;
        let dt = self.dt;
        let mid: Vec<f64> = prev.iter().zip(next).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (prev[i] - next[i]) * self.m[i] / dt).collect();
        self.center(&mut b);
        let mut weights = Vec::with_capacity(self.pairs.len());
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            if !(mid[i] > 0.0 && mid[j] > 0.0) {
                return Ok(None);
            }
            weights.push(self.gamma[e] * self.mean.theta(mid[i], mid[j]));
        }
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for (&(i, j), &w) in self.pairs.iter().zip(&weights) {
            lap[(i, i)] += w;
            lap[(j, j)] += w;
            lap[(i, j)] -= w;
            lap[(j, i)] -= w;
        }
        let shift = ((0..n).map(|i| lap[(i, i)]).sum::<f64>() / n as f64).max(1e-300);
        self.add_kernel_shift(&mut lap, shift);
        let chol = lap
            .cholesky()
            .ok_or_else(|| Error::Singular("interval Laplacian is not positive definite".into()))?;
        let psi = chol.solve(&DVector::from_vec(b.clone()));
        let value = dt * b.iter().zip(psi.iter()).map(|(x, y)| x * y).sum::<f64>();

        let q: Vec<f64> = self.pairs.iter().map(|&(i, j)| psi[i] - psi[j]).collect();
        let derivs: Vec<_> = self
            .pairs
            .iter()
            .map(|&(i, j)| self.mean.derivatives(mid[i], mid[j]))
            .collect();
        // ∂f/∂ρ̄ = −Δt Σ_e q_e² γ_e ∇θ_e
        let mut d_mid = vec![0.0; n];
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            let c = -dt * q[e] * q[e] * self.gamma[e];
            d_mid[i] += c * derivs[e].grad.0;
            d_mid[j] += c * derivs[e].grad.1;
        }
        let grad_prev: Vec<f64> = (0..n).map(|i| 2.0 * self.m[i] * psi[i] + 0.5 * d_mid[i]).collect();
        let grad_next: Vec<f64> = (0..n).map(|i| -2.0 * self.m[i] * psi[i] + 0.5 * d_mid[i]).collect();
        let momentum: Vec<f64> = weights.iter().zip(&q).map(|(w, q)| w * q).collect();

        let hess = if hessian {
            // (L + sΠ)⁻¹ = L⁺ + Π/s
            let mut g = chol.inverse();
            self.add_kernel_shift(&mut g, -1.0 / shift);
            let mut mm = DMatrix::<f64>::zeros(n, n);
            let mut dd = DMatrix::<f64>::zeros(n, n);
            for (e, &(i, j)) in self.pairs.iter().enumerate() {
                let gq = q[e] * self.gamma[e];
                let (ts, tt) = derivs[e].grad;
                mm[(i, i)] += gq * ts;
                mm[(j, i)] -= gq * ts;
                mm[(i, j)] += gq * tt;
                mm[(j, j)] -= gq * tt;
                let c = -q[e] * q[e] * self.gamma[e];
                let (hss, hst, htt) = derivs[e].hess;
                dd[(i, i)] += c * hss;
                dd[(i, j)] += c * hst;
                dd[(j, i)] += c * hst;
                dd[(j, j)] += c * htt;
            }
            let mut u = &mm * -0.5;
            let mut v = u.clone();
            for i in 0..n {
                u[(i, i)] += self.m[i] / dt;
                v[(i, i)] -= self.m[i] / dt;
            }
            let gu = &g * &u;
            let gv = &g * &v;
            let quarter = &dd * 0.25;
            let xx = (u.transpose() * &gu * 2.0 + &quarter) * dt;
            let xy = (u.transpose() * &gv * 2.0 + &quarter) * dt;
            let yy = (v.transpose() * &gv * 2.0 + &quarter) * dt;
            Some((xx, xy, yy))
        } else {
            None
        };
        Ok(Some(IntervalEval {
            value,
            grad_prev,
            grad_next,
            momentum,
            hess,
        }))
    }

    /// Reduced objective and its gradient with respect to the interior nodes.
    pub fn objective(&self, nodes: &[Vec<f64>]) -> Result<Option<(f64, Vec<Vec<f64>>)>> {
        let k = self.intervals;
        let mut value = 0.0;
        let mut grad = vec![vec![0.0; self.n]; k.saturating_sub(1)];
        for step in 1..=k {
            let Some(ev) = self.interval(&nodes[step - 1], &nodes[step], false)? else {
                return Ok(None);
            };
            value += ev.value;
            if step >= 2 {
                for (g, d) in grad[step - 2].iter_mut().zip(&ev.grad_prev) {
                    *g += d;
                }
            }
            if step < k {
                for (g, d) in grad[step - 1].iter_mut().zip(&ev.grad_next) {
                    *g += d;
                }
            }
        }
        Ok(Some((value, grad)))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IntervalEval {
    /// `Δt · bᵀ L⁺ b`.
    pub value: f64,
    pub grad_prev: Vec<f64>,
    pub grad_next: Vec<f64>,
    /// Minimal-action momentum for this interval.
    pub momentum: Vec<f64>,
    /// Hessian blocks `(prev,prev)`, `(prev,next)`, `(next,next)`.
    pub hess: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}
