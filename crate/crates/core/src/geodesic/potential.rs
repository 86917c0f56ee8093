//! Potential recovery: the best gradient field `(ψ_j − ψ_i) θ γ` for a
//! given momentum.

use crate::action::MomentumField;
use crate::error::{Error, Result};
use crate::kernels::EdgeWeights;
use crate::means::Mean;
use crate::numeric::solve_laplacian;

/// Weighted least squares fit of `ν ≈ (ψ_j − ψ_i) θ(ρ_i, ρ_j) γ_ij`.
///
/// Returns `ψ` gauged by `Σ_i ψ_i m_i = 0` on each connected component of
/// the positive-weight support and the relative residual
/// `‖ν − ∇̄ψ·θγ‖ / ‖ν‖` in the norm `Σ v²/(θγ)`.
pub fn recover_potential(
    rho: &[f64],
    nu: &MomentumField,
    edges: &EdgeWeights,
    m: &[f64],
    mean: Mean,
) -> Result<(Vec<f64>, f64)> {
    let n = edges.n_states();
    if rho.len() != n || m.len() != n || nu.len() != edges.len() {
        return Err(Error::Shape("density, weights and momentum sizes differ".into()));
    }
    let weights: Vec<f64> = edges
        .pairs()
        .iter()
        .zip(edges.gamma())
        .map(|(&(i, j), g)| mean.theta(rho[i], rho[j]) * g)
        .collect();
    // normal equations: L_w ψ = −div ν
    let mut rhs = vec![0.0; n];
    for ((&(i, j), &v), &w) in edges.pairs().iter().zip(nu.values()).zip(&weights) {
        if w <= 0.0 && v != 0.0 {
            return Err(Error::Domain(format!(
                "momentum {v} on edge ({i},{j}) where θγ vanishes"
            )));
        }
        rhs[i] -= v;
        rhs[j] += v;
    }
    let psi = solve_laplacian(n, edges.pairs(), &weights, &rhs, m)?;
    let mut resid = 0.0;
    let mut total = 0.0;
    for ((&(i, j), &v), &w) in edges.pairs().iter().zip(nu.values()).zip(&weights) {
        if w > 0.0 {
            let fit = (psi[j] - psi[i]) * w;
            resid += (v - fit).powi(2) / w;
            total += v * v / w;
        }
    }
    let residual = if total == 0.0 { 0.0 } else { (resid / total).sqrt() };
    Ok((psi, residual))
}
