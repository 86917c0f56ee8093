//! The action functional on (density, momentum) pairs.
//!
//! Momenta live on the unordered edges of an [`EdgeWeights`] support and are
//! read antisymmetrically: the stored value for `i < j` is the flow from `i`
//! to `j`, and `ν_ji = −ν_ij`.

use crate::error::{Error, Result};
use crate::kernels::EdgeWeights;
use crate::means::Mean;
use crate::numeric::stable_sum;
use crate::spaces::StateSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField {
    values: Vec<f64>,
}

impl MomentumField {
    pub fn zeros(edges: &EdgeWeights) -> Self {
        MomentumField {
            values: vec![0.0; edges.len()],
        }
    }

    pub fn new(edges: &EdgeWeights, values: Vec<f64>) -> Result<Self> {
        if values.len() != edges.len() {
            return Err(Error::SupportMismatch(format!(
                "{} values for {} edges",
                values.len(),
                edges.len()
            )));
        }
        Ok(MomentumField { values })
    }

    /// Momentum `ν_ij` for an arbitrary ordered pair (0 off the support).
    pub fn get(&self, edges: &EdgeWeights, i: usize, j: usize) -> f64 {
        edges.find(i, j).map_or(0.0, |(e, sign)| sign * self.values[e])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        MomentumField {
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }

    /// `(1 − λ)·self + λ·other`.
    pub fn mix(&self, other: &MomentumField, lambda: f64) -> Self {
        MomentumField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect(),
        }
    }

    /// Momentum field `θ(ρ_i, ρ_j) γ_ij (ψ_j − ψ_i)` induced by a potential.
    pub fn from_potential(edges: &EdgeWeights, rho: &[f64], psi: &[f64], mean: Mean) -> Self {
        MomentumField {
            values: edges
                .pairs()
                .iter()
                .zip(edges.gamma())
                .map(|(&(i, j), &g)| mean.theta(rho[i], rho[j]) * g * (psi[j] - psi[i]))
                .collect(),
        }
    }

    /// Antisymmetric part `(ν_ij − ν_ji)/2` of a full ordered-pair
    /// assignment given as a dense matrix.
    pub fn antisymmetric_part(edges: &EdgeWeights, full: &[Vec<f64>]) -> Self {
        MomentumField {
            values: edges
                .pairs()
                .iter()
                .map(|&(i, j)| 0.5 * (full[i][j] - full[j][i]))
                .collect(),
        }
    }
}

fn edge_cost(nu: f64, theta: f64, gamma: f64) -> f64 {
    let weight = theta * gamma;
    if weight > 0.0 {
        nu * nu / weight
    } else if nu == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `𝒜(ρ, ν) = Σ_{i<j} ν_ij² / (θ(ρ_i, ρ_j) γ_ij)`; `+∞` when some edge
/// carries momentum while `θ` vanishes.
pub fn action(rho: &[f64], nu: &MomentumField, edges: &EdgeWeights, mean: Mean) -> Result<f64> {
    if nu.len() != edges.len() {
        return Err(Error::SupportMismatch(format!(
            "{} momenta for {} edges",
            nu.len(),
            edges.len()
        )));
    }
    if rho.len() != edges.n_states() {
        return Err(Error::Shape(format!(
            "density of length {} on {} states",
            rho.len(),
            edges.n_states()
        )));
    }
    let terms: Vec<f64> = edges
        .pairs()
        .iter()
        .zip(edges.gamma())
        .zip(nu.values())
        .map(|((&(i, j), &g), &v)| edge_cost(v, mean.theta(rho[i], rho[j]), g))
        .collect();
    Ok(stable_sum(&terms))
}

/// Action of a full (not necessarily antisymmetric) ordered-pair momentum
/// matrix: `½ Σ_{i≠j} ν_ij² / (θ γ_ij)`.
pub fn action_ordered(rho: &[f64], full: &[Vec<f64>], edges: &EdgeWeights, mean: Mean) -> f64 {
    let n = rho.len();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let g = edges.weight(i, j);
            terms.push(0.5 * edge_cost(full[i][j], mean.theta(rho[i], rho[j]), g));
        }
    }
    stable_sum(&terms)
}

/// Both sides of the convexity inequality
/// `𝒜(τρ¹ + (1−τ)ρ⁰, τν¹ + (1−τ)ν⁰) ≤ τ𝒜(ρ¹, ν¹) + (1−τ)𝒜(ρ⁰, ν⁰)`.
pub fn action_convexity_witness(
    rho0: &[f64],
    nu0: &MomentumField,
    rho1: &[f64],
    nu1: &MomentumField,
    tau: f64,
    edges: &EdgeWeights,
    mean: Mean,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0,1], got {tau}")));
    }
    let rho: Vec<f64> = rho0.iter().zip(rho1).map(|(a, b)| (1.0 - tau) * a + tau * b).collect();
    let nu = nu0.mix(nu1, tau);
    let lhs = action(&rho, &nu, edges, mean)?;
    let a0 = action(rho0, nu0, edges, mean)?;
    let a1 = action(rho1, nu1, edges, mean)?;
    let rhs = if tau == 0.0 {
        a0
    } else if tau == 1.0 {
        a1
    } else {
        tau * a1 + (1.0 - tau) * a0
    };
    Ok((lhs, rhs))
}

/// A nonnegative convolution kernel on lattice displacements, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeKernel {
    weights: Vec<(Vec<i64>, f64)>,
}

impl LatticeKernel {
    pub fn new(weights: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        if weights.iter().any(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("convolution weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("convolution weights sum to {total}, not 1")));
        }
        Ok(LatticeKernel { weights })
    }

    pub fn delta(z: Vec<i64>) -> Self {
        LatticeKernel {
            weights: vec![(z, 1.0)],
        }
    }

    pub fn weights(&self) -> &[(Vec<i64>, f64)] {
        &self.weights
    }
}

/// `(ρ * k)_i m_i = Σ_z k(z) ρ_{i−z} m_{i−z}`.
pub fn convolve_density(space: &StateSpace, rho: &[f64], k: &LatticeKernel) -> Result<Vec<f64>> {
    space.lattice().ok_or(Error::NotLattice)?;
    let m = space.weights();
    let mut out = vec![0.0; space.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (z, w) in &k.weights {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            let src = space.shift(i, &neg)?;
            acc += w * rho[src] * m[src];
        }
        *o = acc / m[i];
    }
    Ok(out)
}

/// `(ν * k)_ij = Σ_z k(z) ν_{i−z, j−z}` (diagonal shifts).
pub fn convolve_momentum(
    space: &StateSpace,
    edges: &EdgeWeights,
    nu: &MomentumField,
    k: &LatticeKernel,
) -> Result<MomentumField> {
    space.lattice().ok_or(Error::NotLattice)?;
    let mut values = vec![0.0; edges.len()];
    for (e, &(i, j)) in edges.pairs().iter().enumerate() {
        let mut acc = 0.0;
        for (z, w) in &k.weights {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            let a = space.shift(i, &neg)?;
            let b = space.shift(j, &neg)?;
            acc += w * nu.get(edges, a, b);
        }
        values[e] = acc;
    }
    MomentumField::new(edges, values)
}

/// `Σ_{i<j} (1 ∧ |x_i − x_j|) · 2|ν_ij|`.
pub fn truncated_flux_norm(nu: &MomentumField, edges: &EdgeWeights, space: &StateSpace) -> f64 {
    let terms: Vec<f64> = edges
        .pairs()
        .iter()
        .zip(nu.values())
        .map(|(&(i, j), v)| space.distance(i, j).min(1.0) * 2.0 * v.abs())
        .collect();
    stable_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_fractional, JumpKernel};
    use crate::spaces::make_lattice;

    fn two_state() -> (StateSpace, JumpKernel) {
        let s = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let k = JumpKernel::dense(&s, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        (s, k)
    }

    #[test]
    fn action_examples() {
        let (_, k) = two_state();
        let e = k.edges();
        let lm = Mean::Logarithmic;
        assert_eq!(action(&[0.5, 0.5], &MomentumField::zeros(e), e, lm).unwrap(), 0.0);
        let nu = MomentumField::new(e, vec![1.0]).unwrap();
        assert_eq!(action(&[0.5, 0.5], &nu, e, lm).unwrap(), 2.0);
        assert_eq!(action(&[1.0, 0.0], &nu, e, lm).unwrap(), f64::INFINITY);
        let a = action(&[0.3, 0.7], &nu, e, lm).unwrap();
        let b = action(&[0.9, 2.1], &nu.scaled(3.0), e, lm).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-14);
        assert!(action(&[0.5, 0.5], &MomentumField { values: vec![] }, e, lm).is_err());
    }

    #[test]
    fn convexity_endpoints() {
        let (_, k) = two_state();
        let e = k.edges();
        let n0 = MomentumField::new(e, vec![0.3]).unwrap();
        let n1 = MomentumField::new(e, vec![-1.0]).unwrap();
        let (l, r) = action_convexity_witness(&[0.2, 1.8], &n0, &[1.0, 1.0], &n1, 0.0, e, Mean::Logarithmic).unwrap();
        assert_eq!(l, r);
        let (l, r) = action_convexity_witness(&[0.2, 1.8], &n0, &[1.0, 1.0], &n1, 1.0, e, Mean::Logarithmic).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn shift_convolution_preserves_action() {
        let ring = make_lattice(1, &[9], 1.0).unwrap();
        let k = build_fractional(&ring, 1.0, 3, 1.0).unwrap();
        let e = k.edges();
        let rho: Vec<f64> = (0..9).map(|i| 0.05 + 0.01 * i as f64).collect();
        let nu = MomentumField::new(e, (0..e.len()).map(|x| (x as f64 * 0.37).sin()).collect()).unwrap();
        let id = LatticeKernel::delta(vec![0]);
        assert_eq!(convolve_density(&ring, &rho, &id).unwrap(), rho);
        assert_eq!(convolve_momentum(&ring, e, &nu, &id).unwrap(), nu);
        let shift = LatticeKernel::delta(vec![4]);
        let rho_s = convolve_density(&ring, &rho, &shift).unwrap();
        let nu_s = convolve_momentum(&ring, e, &nu, &shift).unwrap();
        assert_eq!(rho_s[4], rho[0]);
        let a = action(&rho, &nu, e, Mean::Logarithmic).unwrap();
        let b = action(&rho_s, &nu_s, e, Mean::Logarithmic).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn flux_norm_examples() {
        let (s, k) = two_state();
        let e = k.edges();
        assert_eq!(truncated_flux_norm(&MomentumField::zeros(e), e, &s), 0.0);
        let nu = MomentumField::new(e, vec![2.0]).unwrap();
        assert_eq!(truncated_flux_norm(&nu, e, &s), 4.0);
    }

    #[test]
    fn antisymmetrization_does_not_increase_action() {
        let ring = make_lattice(1, &[5], 1.0).unwrap();
        let k = build_fractional(&ring, 1.0, 2, 1.0).unwrap();
        let e = k.edges();
        let rho = [0.1, 0.3, 0.2, 0.25, 0.15];
        let mut full = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                if i != j && e.weight(i, j) > 0.0 {
                    full[i][j] = ((3 * i + 7 * j) as f64).cos();
                }
            }
        }
        let anti = MomentumField::antisymmetric_part(e, &full);
        let a_full = action_ordered(&rho, &full, e, Mean::Logarithmic);
        let a_anti = action(&rho, &anti, e, Mean::Logarithmic).unwrap();
        assert!(a_anti <= a_full);
        // an antisymmetric matrix reproduces the unordered-pair action
        let mut sym = vec![vec![0.0; 5]; 5];
        for (idx, &(i, j)) in e.pairs().iter().enumerate() {
            sym[i][j] = anti.values()[idx];
            sym[j][i] = -anti.values()[idx];
        }
        let a_sym = action_ordered(&rho, &sym, e, Mean::Logarithmic);
        assert!((a_sym - a_anti).abs() < 1e-14 * a_anti);
    }

    #[test]
    fn convolution_rejects_bad_kernels() {
        assert!(LatticeKernel::new(vec![(vec![0], 0.5)]).is_err());
        assert!(LatticeKernel::new(vec![(vec![0], 1.5), (vec![1], -0.5)]).is_err());
        let s = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            convolve_density(&s, &[0.5, 0.5], &LatticeKernel::delta(vec![0])).unwrap_err(),
            Error::NotLattice
        );
    }
}
