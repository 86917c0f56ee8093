//! Discrete non-local continuity equation and time-discretized paths.
//!
//! A [`Path`] with `K` intervals on `[0, T]` holds densities `ρ⁰..ρᴷ` at the
//! grid nodes and one momentum field per interval. It solves the continuity
//! equation when `(ρᵏ − ρᵏ⁻¹)_i m_i + Δt·div(νᵏ)_i = 0` for all `k, i`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::action::{action, MomentumField};
use crate::error::{Error, Result};
use crate::kernels::EdgeWeights;
use crate::means::Mean;
use crate::numeric::stable_sum;
use crate::spaces::StateSpace;

/// Out-flux `div(ν)_i = Σ_j ν_ij`.
pub fn divergence(nu: &MomentumField, edges: &EdgeWeights) -> Vec<f64> {
    let mut d = vec![0.0; edges.n_states()];
    for (&(i, j), &v) in edges.pairs().iter().zip(nu.values()) {
        d[i] += v;
        d[j] -= v;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    horizon: f64,
    densities: Vec<Vec<f64>>,
    momenta: Vec<MomentumField>,
}

impl Path {
    pub fn new(horizon: f64, densities: Vec<Vec<f64>>, momenta: Vec<MomentumField>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if momenta.is_empty() || densities.len() != momenta.len() + 1 {
            return Err(Error::Shape(format!(
                "{} densities for {} intervals",
                densities.len(),
                momenta.len()
            )));
        }
        let n = densities[0].len();
        if densities.iter().any(|d| d.len() != n) {
            return Err(Error::Shape("densities of different lengths".into()));
        }
        let e = momenta[0].len();
        if momenta.iter().any(|m| m.len() != e) {
            return Err(Error::Shape("momenta of different lengths".into()));
        }
        Ok(Path {
            horizon,
            densities,
            momenta,
        })
    }

    /// The path that stays at `rho` with zero momentum.
    pub fn constant(rho: &[f64], edges: &EdgeWeights, intervals: usize, horizon: f64) -> Result<Self> {
        Path::new(
            horizon,
            vec![rho.to_vec(); intervals + 1],
            vec![MomentumField::zeros(edges); intervals],
        )
    }

    pub fn intervals(&self) -> usize {
        self.momenta.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.intervals() as f64
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }

    pub fn momenta(&self) -> &[MomentumField] {
        &self.momenta
    }

    /// `ρ̄ᵏ = (ρᵏ⁻¹ + ρᵏ)/2` for interval `k ∈ 1..=K`.
    pub fn midpoint(&self, k: usize) -> Vec<f64> {
        self.densities[k - 1]
            .iter()
            .zip(&self.densities[k])
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Same curve traversed backwards: densities reversed, momenta negated.
    pub fn reversed(&self) -> Path {
        Path {
            horizon: self.horizon,
            densities: self.densities.iter().rev().cloned().collect(),
            momenta: self.momenta.iter().rev().map(|m| m.scaled(-1.0)).collect(),
        }
    }

    /// Glues `other` after `self`. Endpoints must match and both paths must
    /// use the same step so the joined grid stays uniform.
    pub fn concat(&self, other: &Path) -> Result<Path> {
        let last = self.densities.last().expect("path has densities");
        let first = &other.densities[0];
        let gap = last.iter().zip(first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-12 {
            return Err(Error::Shape(format!("endpoints differ by {gap:e}")));
        }
        if (self.dt() - other.dt()).abs() > 1e-12 * self.dt() {
            return Err(Error::Shape("paths use different time steps".into()));
        }
        let mut densities = self.densities.clone();
        densities.extend(other.densities.iter().skip(1).cloned());
        let mut momenta = self.momenta.clone();
        momenta.extend(other.momenta.iter().cloned());
        Path::new(self.horizon + other.horizon, densities, momenta)
    }

    /// Per-interval action `𝒜(ρ̄ᵏ, νᵏ)`.
    pub fn interval_actions(&self, edges: &EdgeWeights, mean: Mean) -> Result<Vec<f64>> {
        (1..=self.intervals())
            .map(|k| action(&self.midpoint(k), &self.momenta[k - 1], edges, mean))
            .collect()
    }

    pub fn to_json(&self, edges: &EdgeWeights) -> Result<String> {
        Ok(serde_json::to_string(&PathRecord::from_path(self, edges))?)
    }

    pub fn from_json(s: &str, edges: &EdgeWeights) -> Result<Path> {
        let rec: PathRecord = serde_json::from_str(s)?;
        rec.into_path(edges)
    }

    /// Long-format CSV of densities: `k,t,state,value`.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "t", "state", "value"]).map_err(csv_err)?;
        for (k, rho) in self.densities.iter().enumerate() {
            for (i, v) in rho.iter().enumerate() {
                w.write_record(&[k.to_string(), self.time(k).to_string(), i.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))
    }

    /// Long-format CSV of momenta: `k,i,j,value` (interval `k ∈ 1..=K`).
    pub fn write_momentum_csv<W: Write>(&self, edges: &EdgeWeights, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "i", "j", "value"]).map_err(csv_err)?;
        for (k, nu) in self.momenta.iter().enumerate() {
            for (&(i, j), v) in edges.pairs().iter().zip(nu.values()) {
                w.write_record(&[(k + 1).to_string(), i.to_string(), j.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    horizon: f64,
    edges: Vec<(usize, usize)>,
    densities: Vec<Vec<f64>>,
    momenta: Vec<Vec<f64>>,
}

impl PathRecord {
    fn from_path(path: &Path, edges: &EdgeWeights) -> Self {
        PathRecord {
            horizon: path.horizon,
            edges: edges.pairs().to_vec(),
            densities: path.densities.clone(),
            momenta: path.momenta.iter().map(|m| m.values().to_vec()).collect(),
        }
    }

    fn into_path(self, edges: &EdgeWeights) -> Result<Path> {
        if self.edges != edges.pairs() {
            return Err(Error::SupportMismatch("path edges differ from kernel support".into()));
        }
        let momenta = self
            .momenta
            .into_iter()
            .map(|v| MomentumField::new(edges, v))
            .collect::<Result<Vec<_>>>()?;
        Path::new(self.horizon, self.densities, momenta)
    }
}

/// `max_{k,i} |(ρᵏ_i − ρᵏ⁻¹_i) m_i + Δt·div(νᵏ)_i|`.
pub fn ce_residual(path: &Path, space: &StateSpace, edges: &EdgeWeights) -> f64 {
    let m = space.weights();
    let dt = path.dt();
    let mut worst = 0.0f64;
    for k in 1..=path.intervals() {
        let div = divergence(&path.momenta[k - 1], edges);
        for i in 0..m.len() {
            let r = (path.densities[k][i] - path.densities[k - 1][i]) * m[i] + dt * div[i];
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// `Σ_k Δt · 𝒜(ρ̄ᵏ, νᵏ)`.
pub fn path_action(path: &Path, edges: &EdgeWeights, mean: Mean) -> Result<f64> {
    let dt = path.dt();
    let terms: Vec<f64> = path
        .interval_actions(edges, mean)?
        .into_iter()
        .map(|a| dt * a)
        .collect();
    Ok(stable_sum(&terms))
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
    fn divergence_examples() {
        let (_, k) = two_state();
        let e = k.edges();
        assert_eq!(divergence(&MomentumField::zeros(e), e), vec![0.0, 0.0]);
        let nu = MomentumField::new(e, vec![1.0]).unwrap();
        assert_eq!(divergence(&nu, e), vec![1.0, -1.0]);

        let tri = EdgeWeights::from_pairs(3, &[((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 1.0)]).unwrap();
        // ν_01 = ν_12 = ν_20 = c; stored (0,2) carries ν_02 = −c
        let c = 0.7;
        let nu = MomentumField::new(&tri, vec![c, c, -c]).unwrap();
        assert_eq!(divergence(&nu, &tri), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn swap_path() {
        let (s, k) = two_state();
        let e = k.edges();
        let nu = MomentumField::new(e, vec![1.0]).unwrap();
        let path = Path::new(1.0, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![nu]).unwrap();
        assert_eq!(ce_residual(&path, &s, e), 0.0);
        assert_eq!(path_action(&path, e, Mean::Logarithmic).unwrap(), 2.0);

        let still = Path::constant(&[0.5, 0.5], e, 4, 1.0).unwrap();
        assert_eq!(ce_residual(&still, &s, e), 0.0);
        assert_eq!(path_action(&still, e, Mean::Logarithmic).unwrap(), 0.0);
    }

    #[test]
    fn reversal_preserves_residual_and_action() {
        let ring = make_lattice(1, &[6], 1.0).unwrap();
        let k = build_fractional(&ring, 1.0, 2, 1.0).unwrap();
        let e = k.edges();
        let mut densities = vec![vec![1.0 / 6.0; 6]];
        let mut momenta = Vec::new();
        let dt = 0.25;
        for step in 0..4 {
            let nu = MomentumField::new(e, (0..e.len()).map(|x| 0.01 * ((x + step) as f64).sin()).collect()).unwrap();
            let div = divergence(&nu, e);
            let prev = densities.last().unwrap().clone();
            densities.push(prev.iter().zip(&div).map(|(r, d)| r - dt * d).collect());
            momenta.push(nu);
        }
        let path = Path::new(1.0, densities, momenta).unwrap();
        let rev = path.reversed();
        assert_eq!(ce_residual(&path, &ring, e), ce_residual(&rev, &ring, e));
        assert_eq!(
            path_action(&path, e, Mean::Logarithmic).unwrap(),
            path_action(&rev, e, Mean::Logarithmic).unwrap()
        );
        // mass is conserved along a solution
        for rho in path.densities() {
            assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        let glued = path.concat(&rev).unwrap();
        assert_eq!(glued.intervals(), 8);
        assert_eq!(glued.horizon(), 2.0);
        assert!(ce_residual(&glued, &ring, e) <= ce_residual(&path, &ring, e).max(ce_residual(&rev, &ring, e)));
        let json = path.to_json(e).unwrap();
        assert_eq!(Path::from_json(&json, e).unwrap(), path);
    }

    #[test]
    fn csv_layout() {
        let (_, k) = two_state();
        let e = k.edges();
        let nu = MomentumField::new(e, vec![1.0]).unwrap();
        let path = Path::new(1.0, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![nu]).unwrap();
        let mut buf = Vec::new();
        path.write_density_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("k,t,state,value"));
        let mut buf = Vec::new();
        path.write_momentum_csv(e, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,i,j,value\n1,0,1,1\n");
    }
}
