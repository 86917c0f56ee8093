//! Jump kernels, symmetric edge weights and the Markov generator.
//!
//! A kernel is stored in the form it was given (dense rates or lattice
//! displacement weights) and materialized into a dense rate matrix `J` plus
//! a sparse list of unordered edges carrying `γ_ij = J_ij m_i`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stable_sum;
use crate::spaces::StateSpace;

/// Relative reversibility tolerance: `defect ≤ REVERSIBILITY_TOL · max(J m)`.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

/// Largest state count for which a dense rate matrix is materialized.
pub const MAX_DENSE_STATES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm {
    Dense,
    /// Weights `ν(z)` on a symmetric displacement set of a periodic lattice.
    TranslationInvariant {
        weights: Vec<(Vec<i64>, f64)>,
    },
}

#[derive(Debug, Clone)]
pub struct JumpKernel {
    space: StateSpace,
    form: KernelForm,
    rates: Vec<Vec<f64>>,
    edges: EdgeWeights,
}

/// Symmetric edge weights `γ_ij = J_ij m_i`, one entry per unordered pair
/// `i < j` with `γ_ij > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    n: usize,
    pairs: Vec<(usize, usize)>,
    gamma: Vec<f64>,
    index: HashMap<(usize, usize), usize>,
}

impl EdgeWeights {
    /// Builds edge weights from explicit unordered pairs. Pairs are
    /// normalized to `i < j`; zero weights are dropped.
    pub fn from_pairs(n: usize, entries: &[((usize, usize), f64)]) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut gamma = Vec::new();
        let mut index = HashMap::new();
        for &((a, b), g) in entries {
            if a == b || a >= n || b >= n {
                return Err(Error::Kernel(format!("invalid edge ({a},{b}) on {n} states")));
            }
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::Kernel(format!("edge weight {g} must be finite and nonnegative")));
            }
            if g == 0.0 {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if index.contains_key(&key) {
                return Err(Error::Kernel(format!("duplicate edge {key:?}")));
            }
            index.insert(key, pairs.len());
            pairs.push(key);
            gamma.push(g);
        }
        Ok(EdgeWeights { n, pairs, gamma, index })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Edge index of the unordered pair and the orientation sign:
    /// `+1` when `(i, j)` matches the stored `i < j` order.
    pub fn find(&self, i: usize, j: usize) -> Option<(usize, f64)> {
        if i < j {
            self.index.get(&(i, j)).map(|&e| (e, 1.0))
        } else {
            self.index.get(&(j, i)).map(|&e| (e, -1.0))
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |(e, _)| self.gamma[e])
    }

    /// Edge lists per state: `(edge, neighbour, sign)`.
    pub fn incidence(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let mut inc = vec![Vec::new(); self.n];
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            inc[i].push((e, j, 1.0));
            inc[j].push((e, i, -1.0));
        }
        inc
    }

    /// Connected components of the positive-weight graph, as a component
    /// label per state (labels are assigned in order of first appearance).
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for &(i, j) in &self.pairs {
            let (a, b) = (root(&mut parent, i), root(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut out = vec![0; self.n];
        for i in 0..self.n {
            let r = root(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[i] = label[r];
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

impl JumpKernel {
    /// Dense rate matrix kernel. Rejects non-reversible rates.
    pub fn dense(space: &StateSpace, rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        if n > MAX_DENSE_STATES {
            return Err(Error::Kernel(format!(
                "dense kernels are limited to {MAX_DENSE_STATES} states"
            )));
        }
        if rates.len() != n || rates.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("rate matrix must be {n}x{n}")));
        }
        for (i, row) in rates.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Kernel(format!("diagonal rate J[{i}][{i}] must be zero")));
            }
            if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::Kernel(format!(
                    "rate J[{i}][{j}] = {v} is negative or not finite"
                )));
            }
        }
        let kernel = Self::assemble(space, KernelForm::Dense, rates)?;
        kernel.require_reversible()?;
        Ok(kernel)
    }

    /// Translation-invariant kernel on a periodic lattice from displacement
    /// weights. The weights must be symmetric, `ν(z) = ν(−z)`.
    pub fn translation_invariant(space: &StateSpace, weights: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let (extents, _) = space.lattice().ok_or(Error::NotLattice)?;
        let n = space.len();
        if n > MAX_DENSE_STATES {
            return Err(Error::Kernel(format!(
                "kernels are limited to {MAX_DENSE_STATES} states"
            )));
        }
        let mut table: HashMap<Vec<i64>, f64> = HashMap::new();
        for (z, w) in &weights {
            if z.len() != extents.len() {
                return Err(Error::Shape(format!("displacement {z:?} has wrong dimension")));
            }
            if z.iter().zip(extents).all(|(c, &e)| c.rem_euclid(e as i64) == 0) {
                return Err(Error::Kernel(format!("displacement {z:?} wraps onto the origin")));
            }
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::Kernel(format!(
                    "weight {w} at {z:?} must be finite and nonnegative"
                )));
            }
            if table.insert(z.clone(), *w).is_some() {
                return Err(Error::Kernel(format!("duplicate displacement {z:?}")));
            }
        }
        for (z, w) in &weights {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            match table.get(&neg) {
                Some(v) if v == w => {}
                _ => return Err(Error::AsymmetricWeights(z.clone())),
            }
        }
        let mut rates = vec![vec![0.0; n]; n];
        for (i, row) in rates.iter_mut().enumerate() {
            for (z, w) in &weights {
                let j = space.shift(i, z)?;
                row[j] += w;
            }
        }
        let kernel = Self::assemble(space, KernelForm::TranslationInvariant { weights }, rates)?;
        kernel.require_reversible()?;
        Ok(kernel)
    }

    fn assemble(space: &StateSpace, form: KernelForm, rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        let m = space.weights();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                // pairs with J_ij = 0 < J_ji are caught by the reversibility check
                if rates[i][j] > 0.0 {
                    entries.push(((i, j), rates[i][j] * m[i]));
                }
            }
        }
        let edges = EdgeWeights::from_pairs(n, &entries)?;
        Ok(JumpKernel {
            space: space.clone(),
            form,
            rates,
            edges,
        })
    }

    fn require_reversible(&self) -> Result<()> {
        let defect = check_reversibility(self);
        let scale = self
            .rates
            .iter()
            .zip(self.space.weights())
            .flat_map(|(row, w)| row.iter().map(move |j| j * w))
            .fold(0.0, f64::max);
        let tolerance = REVERSIBILITY_TOL * scale;
        if defect > tolerance {
            return Err(Error::NotReversible { defect, tolerance });
        }
        Ok(())
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i][j]
    }

    pub fn edges(&self) -> &EdgeWeights {
        &self.edges
    }

    pub fn is_translation_invariant(&self) -> bool {
        matches!(self.form, KernelForm::TranslationInvariant { .. })
    }

    /// Multiplies every rate by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Domain("scale factor must be positive".into()));
        }
        let rates = self
            .rates
            .iter()
            .map(|r| r.iter().map(|v| v * lambda).collect())
            .collect();
        let form = match &self.form {
            KernelForm::Dense => KernelForm::Dense,
            KernelForm::TranslationInvariant { weights } => KernelForm::TranslationInvariant {
                weights: weights.iter().map(|(z, w)| (z.clone(), w * lambda)).collect(),
            },
        };
        Self::assemble(&self.space, form, rates)
    }

    /// Total jump rate out of each state.
    pub fn total_rates(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Truncated fractional kernel `ν(z) = c (h|z|)^(−α−d) h^d` for
/// `0 < |z| ≤ radius` on a periodic lattice.
pub fn build_fractional(space: &StateSpace, alpha: f64, radius: usize, c: f64) -> Result<JumpKernel> {
    let (extents, h) = space.lattice().ok_or(Error::NotLattice)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Kernel(format!("alpha must lie in (0,2), got {alpha}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Kernel(format!("normalization c must be positive, got {c}")));
    }
    let min_extent = *extents.iter().min().expect("lattice has extents");
    if radius < 1 || 2 * radius >= min_extent {
        return Err(Error::Kernel(format!(
            "truncation radius {radius} must satisfy 1 <= R < {}/2",
            min_extent
        )));
    }
    let d = extents.len();
    let r = radius as i64;
    let mut weights = Vec::new();
    let mut push = |z: Vec<i64>| {
        let norm2: i64 = z.iter().map(|c| c * c).sum();
        if norm2 == 0 || norm2 > r * r {
            return;
        }
        let dist = h * (norm2 as f64).sqrt();
        let w = c * dist.powf(-alpha - d as f64) * h.powi(d as i32);
        weights.push((z, w));
    };
    if d == 1 {
        for a in -r..=r {
            push(vec![a]);
        }
    } else {
        for a in -r..=r {
            for b in -r..=r {
                push(vec![a, b]);
            }
        }
    }
    JumpKernel::translation_invariant(space, weights)
}

/// Default truncation radius for a lattice: `min extent / 2 − 1` (at least 1).
pub fn default_radius(space: &StateSpace) -> Result<usize> {
    let (extents, _) = space.lattice().ok_or(Error::NotLattice)?;
    let min_extent = *extents.iter().min().expect("lattice has extents");
    Ok((min_extent / 2).saturating_sub(1).max(1))
}

/// `max_ij |J_ij m_i − J_ji m_j|`.
pub fn check_reversibility(kernel: &JumpKernel) -> f64 {
    let m = kernel.space.weights();
    let j = &kernel.rates;
    let n = m.len();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in (a + 1)..n {
            worst = worst.max((j[a][b] * m[a] - j[b][a] * m[b]).abs());
        }
    }
    worst
}

/// `M² = max_i Σ_j |x_i − x_j|² J_ij`.
pub fn second_moment(kernel: &JumpKernel) -> f64 {
    row_moments(kernel, |d| d * d)
}

/// `C = sqrt(2 · max_i Σ_j (1 ∧ |x_i − x_j|²) J_ij)`.
pub fn integrability_constant(kernel: &JumpKernel) -> f64 {
    (2.0 * row_moments(kernel, |d| (d * d).min(1.0))).sqrt()
}

fn row_moments(kernel: &JumpKernel, f: impl Fn(f64) -> f64) -> f64 {
    let space = &kernel.space;
    kernel
        .rates
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let terms: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|(_, &r)| r > 0.0)
                .map(|(j, &r)| f(space.distance(i, j)) * r)
                .collect();
            stable_sum(&terms)
        })
        .fold(0.0, f64::max)
}

/// `(Lρ)_i = Σ_j J_ij (ρ_j − ρ_i)`.
///
/// Translation-invariant kernels are applied displacement by displacement,
/// so the result commutes bit-for-bit with lattice shifts.
pub fn generator_apply(kernel: &JumpKernel, rho: &[f64]) -> Result<Vec<f64>> {
    let space = &kernel.space;
    let n = space.len();
    if rho.len() != n {
        return Err(Error::Shape(format!("vector of length {} on {n} states", rho.len())));
    }
    match &kernel.form {
        KernelForm::TranslationInvariant { weights } => {
            let mut out = vec![0.0; n];
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (z, w) in weights {
                    let j = space.shift(i, z)?;
                    acc += w * (rho[j] - rho[i]);
                }
                *o = acc;
            }
            Ok(out)
        }
        KernelForm::Dense => {
            let m = space.weights();
            let mut out = vec![0.0; n];
            let edges = &kernel.edges;
            for (&(i, j), &g) in edges.pairs.iter().zip(&edges.gamma) {
                let flux = g * (rho[j] - rho[i]);
                out[i] += flux / m[i];
                out[j] -= flux / m[j];
            }
            Ok(out)
        }
    }
}

/// Dense generator matrix `L` with `L_ij = J_ij`, `L_ii = −Σ_j J_ij`.
pub fn generator_matrix(kernel: &JumpKernel) -> Vec<Vec<f64>> {
    let n = kernel.space.len();
    let mut l = kernel.rates.clone();
    for (i, row) in l.iter_mut().enumerate() {
        let total: f64 = (0..n).filter(|&j| j != i).map(|j| row[j]).sum();
        row[i] = -total;
    }
    l
}

/// JSON kernel description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Fractional {
        alpha: f64,
        #[serde(rename = "R", default)]
        radius: Option<usize>,
        #[serde(default)]
        c: Option<f64>,
    },
    Dense {
        #[serde(rename = "J")]
        rates: Vec<Vec<f64>>,
    },
    LatticeWeights {
        weights: Vec<DisplacementWeight>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DisplacementWeight {
    pub z: Vec<i64>,
    pub w: f64,
}

impl KernelSpec {
    pub fn build(&self, space: &StateSpace) -> Result<JumpKernel> {
        match self {
            KernelSpec::Fractional { alpha, radius, c } => {
                let radius = match radius {
                    Some(r) => *r,
                    None => default_radius(space)?,
                };
                build_fractional(space, *alpha, radius, c.unwrap_or(1.0))
            }
            KernelSpec::Dense { rates } => JumpKernel::dense(space, rates.clone()),
            KernelSpec::LatticeWeights { weights } => {
                JumpKernel::translation_invariant(space, weights.iter().map(|d| (d.z.clone(), d.w)).collect())
            }
        }
    }
}
