//! Small numerical building blocks shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Order-independent summation: terms are sorted before a pairwise
/// reduction, so any permutation of the input yields the same bits.
pub fn stable_sum(terms: &[f64]) -> f64 {
    if terms.iter().any(|t| t.is_nan()) {
        return f64::NAN;
    }
    let mut sorted = terms.to_vec();
    sorted.sort_by(f64::total_cmp);
    pairwise(&sorted)
}

fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise(&v[..mid]) + pairwise(&v[mid..])
}

/// Composite Simpson rule with `panels` subintervals (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(2) + panels % 2;
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for k in 1..panels {
        let x = a + h * k as f64;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Tanh-sinh (double exponential) quadrature on `[a, b]`.
///
/// Robust to integrable endpoint singularities because nodes cluster
/// doubly-exponentially at the ends and the integrand is never evaluated
/// exactly at `a` or `b`. The step is halved until two successive levels
/// agree to `tol` (relative).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let t_max = 3.5;
    // x = mid + half * tanh(π/2 sinh t); also keep the distance to the
    // nearest endpoint to avoid cancellation near a and b
    let eval = |t: f64| -> f64 {
        let u = 0.5 * std::f64::consts::PI * t.sinh();
        let ch = 0.5 * std::f64::consts::PI * t.cosh();
        let cu = u.cosh();
        let weight = ch / (cu * cu);
        // 1 - tanh(|u|) = 2 / (exp(2|u|) + 1)
        let gap = 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        let x = if u >= 0.0 { b - half * gap } else { a + half * gap };
        if gap == 0.0 || !(x > a && x < b) {
            return 0.0;
        }
        let v = f(x) * weight;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        if t > t_max {
            break;
        }
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * h * half;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= tol * estimate.abs().max(1e-300) {
            return Ok(estimate);
        }
    }
    Err(Error::Quadrature(format!(
        "tanh-sinh did not reach relative tolerance {tol:e}"
    )))
}

/// Solves `L ψ = b` for a weighted graph Laplacian `L = Σ_e w_e (δ_i − δ_j)(δ_i − δ_j)ᵀ`.
///
/// Each connected component of the positive-weight graph gets its own
/// gauge `Σ_{i∈C} ψ_i m_i = 0`; the right-hand side is first projected to
/// zero sum on each component.
pub fn solve_laplacian(
    n: usize,
    pairs: &[(usize, usize)],
    weights: &[f64],
    rhs: &[f64],
    gauge: &[f64],
) -> Result<Vec<f64>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (&(i, j), &w) in pairs.iter().zip(weights) {
        if w > 0.0 {
            let (a, b) = (root(&mut parent, i), root(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| root(&mut parent, i)).collect();
    let mut psi = vec![0.0; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        members[roots[i]].push(i);
    }
    let mut local = vec![usize::MAX; n];
    for comp in members.iter().filter(|c| c.len() > 1) {
        let size = comp.len();
        for (a, &i) in comp.iter().enumerate() {
            local[i] = a;
        }
        let mut lap = DMatrix::<f64>::zeros(size, size);
        for (&(i, j), &w) in pairs.iter().zip(weights) {
            if w > 0.0 && local[i] != usize::MAX && roots[i] == roots[comp[0]] {
                let (a, b) = (local[i], local[j]);
                lap[(a, a)] += w;
                lap[(b, b)] += w;
                lap[(a, b)] -= w;
                lap[(b, a)] -= w;
            }
        }
        let shift = (0..size).map(|a| lap[(a, a)]).sum::<f64>() / (size * size) as f64;
        lap.add_scalar_mut(shift);
        let mean = comp.iter().map(|&i| rhs[i]).sum::<f64>() / size as f64;
        let b = DVector::from_iterator(size, comp.iter().map(|&i| rhs[i] - mean));
        let chol = lap
            .cholesky()
            .ok_or_else(|| Error::Singular("graph Laplacian is not positive definite".into()))?;
        let x = chol.solve(&b);
        let wsum: f64 = comp.iter().map(|&i| gauge[i]).sum();
        let offset = comp.iter().enumerate().map(|(a, &i)| x[a] * gauge[i]).sum::<f64>() / wsum;
        for (a, &i) in comp.iter().enumerate() {
            psi[i] = x[a] - offset;
            local[i] = usize::MAX;
        }
    }
    Ok(psi)
}

/// Symmetric positive definite block-tridiagonal matrix, factored in place.
///
/// Block `k` is `diag[k]`; `lower[k]` couples block `k + 1` to block `k`
/// (shape `size(k+1) × size(k)`). Blocks may differ in size.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    factors: Vec<DMatrix<f64>>,
    couplings: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn factor(diag: Vec<DMatrix<f64>>, lower: Vec<DMatrix<f64>>) -> Result<Self> {
        if diag.is_empty() || lower.len() + 1 != diag.len() {
            return Err(Error::Shape("block tridiagonal shape mismatch".into()));
        }
        let mut factors = Vec::with_capacity(diag.len());
        let mut couplings = Vec::with_capacity(lower.len());
        let mut schur = diag[0].clone();
        for k in 0..diag.len() {
            let chol = schur
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular(format!("block {k} is not positive definite")))?;
            let l = chol.l();
            if k + 1 < diag.len() {
                // W = E L^{-T}, i.e. L Wᵀ = Eᵀ
                let mut wt = lower[k].transpose();
                if !l.solve_lower_triangular_mut(&mut wt) {
                    return Err(Error::Singular(format!("block {k} factor is singular")));
                }
                let w = wt.transpose();
                schur = &diag[k + 1] - &w * &wt;
                couplings.push(w);
            }
            factors.push(l);
        }
        Ok(BlockTridiag { factors, couplings })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Solves in place; `rhs` is the concatenation of the block vectors.
    pub fn solve(&self, rhs: &mut [f64]) {
        let sizes = self.sizes();
        let mut offsets = vec![0usize; sizes.len() + 1];
        for (k, s) in sizes.iter().enumerate() {
            offsets[k + 1] = offsets[k] + s;
        }
        let nb = sizes.len();
        let mut z: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut b = DVector::from_column_slice(&rhs[offsets[k]..offsets[k + 1]]);
            if k > 0 {
                b -= &self.couplings[k - 1] * &z[k - 1];
            }
            self.factors[k].solve_lower_triangular_mut(&mut b);
            z.push(b);
        }
        for k in (0..nb).rev() {
            let mut b = z[k].clone();
            if k + 1 < nb {
                let next = DVector::from_column_slice(&rhs[offsets[k + 1]..offsets[k + 2]]);
                b -= self.couplings[k].transpose() * next;
            }
            self.factors[k].tr_solve_lower_triangular_mut(&mut b);
            rhs[offsets[k]..offsets[k + 1]].copy_from_slice(b.as_slice());
        }
    }
}
