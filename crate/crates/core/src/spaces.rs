//! Finite state spaces and probability densities on them.
//!
//! A [`StateSpace`] is either a general point cloud with arbitrary positive
//! weights or a periodic lattice (a discrete torus) with the uniform measure
//! `h^d` per site. Densities are always taken with respect to the base
//! measure `m`, so a [`ProbabilityDensity`] satisfies `Σ ρ_i m_i = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σ ρ_i m_i − 1|` accepted by the density validator.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    General,
    PeriodicLattice { extents: Vec<usize>, h: f64 },
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::General => "general",
            Topology::PeriodicLattice { .. } => "lattice",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    dim: usize,
    positions: Vec<Vec<f64>>,
    m: Vec<f64>,
    topology: Topology,
}

/// Builds a periodic lattice with `∏ extents` sites, spacing `h` and weight
/// `h^d` per site.
pub fn make_lattice(d: usize, extents: &[usize], h: f64) -> Result<StateSpace> {
    if d == 0 || d > 2 {
        return Err(Error::Space(format!("lattice dimension must be 1 or 2, got {d}")));
    }
    if extents.len() != d {
        return Err(Error::Space(format!("expected {d} extents, got {}", extents.len())));
    }
    if let Some(&e) = extents.iter().find(|&&e| e < 2) {
        return Err(Error::Space(format!("every extent must be at least 2, got {e}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Space(format!("lattice spacing must be positive, got {h}")));
    }
    let n: usize = extents.iter().product();
    let weight = h.powi(d as i32);
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let z = multi_index_of(extents, i);
        positions.push(z.iter().map(|&c| h * c as f64).collect());
    }
    Ok(StateSpace {
        dim: d,
        positions,
        m: vec![weight; n],
        topology: Topology::PeriodicLattice {
            extents: extents.to_vec(),
            h,
        },
    })
}

fn multi_index_of(extents: &[usize], mut i: usize) -> Vec<i64> {
    // last axis varies fastest
    let mut z = vec![0i64; extents.len()];
    for axis in (0..extents.len()).rev() {
        z[axis] = (i % extents[axis]) as i64;
        i /= extents[axis];
    }
    z
}

impl StateSpace {
    /// A general (non-lattice) space from explicit positions and weights.
    pub fn general(positions: Vec<Vec<f64>>, m: Vec<f64>) -> Result<Self> {
        let space = StateSpace {
            dim: positions.first().map_or(0, Vec::len),
            positions,
            m,
            topology: Topology::General,
        };
        space.validate()?;
        Ok(space)
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.m.len();
        if n < 2 {
            return Err(Error::Space(format!("need at least 2 states, got {n}")));
        }
        if self.positions.len() != n {
            return Err(Error::Space(format!(
                "{} positions for {} weights",
                self.positions.len(),
                n
            )));
        }
        if self.dim == 0 || self.positions.iter().any(|p| p.len() != self.dim) {
            return Err(Error::Space("positions must share a positive dimension".into()));
        }
        if let Some((i, &w)) = self.m.iter().enumerate().find(|(_, &w)| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Space(format!("weight m[{i}] = {w} is not positive")));
        }
        if self.positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Space("positions must be finite".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if self.positions[i] == self.positions[j] {
                    return Err(Error::Space(format!("states {i} and {j} coincide")));
                }
            }
        }
        if let Topology::PeriodicLattice { extents, h } = &self.topology {
            if extents.iter().product::<usize>() != n || extents.len() != self.dim {
                return Err(Error::Space("lattice extents do not match state count".into()));
            }
            if !(*h > 0.0) {
                return Err(Error::Space("lattice spacing must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.m
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.topology, Topology::PeriodicLattice { .. })
    }

    /// Lattice extents and spacing, if this is a periodic lattice.
    pub fn lattice(&self) -> Option<(&[usize], f64)> {
        match &self.topology {
            Topology::PeriodicLattice { extents, h } => Some((extents, *h)),
            Topology::General => None,
        }
    }

    /// Multi-index of lattice site `i`.
    pub fn multi_index(&self, i: usize) -> Result<Vec<i64>> {
        let (extents, _) = self.lattice().ok_or(Error::NotLattice)?;
        Ok(multi_index_of(extents, i))
    }

    /// Linear index of a (wrapped) multi-index.
    pub fn site(&self, z: &[i64]) -> Result<usize> {
        let (extents, _) = self.lattice().ok_or(Error::NotLattice)?;
        if z.len() != extents.len() {
            return Err(Error::Shape(format!(
                "multi-index of length {} on a {}-d lattice",
                z.len(),
                extents.len()
            )));
        }
        let mut i = 0usize;
        for (c, &e) in z.iter().zip(extents) {
            i = i * e + c.rem_euclid(e as i64) as usize;
        }
        Ok(i)
    }

    /// Site reached from `i` by the displacement `z` (with wraparound).
    pub fn shift(&self, i: usize, z: &[i64]) -> Result<usize> {
        let mut zi = self.multi_index(i)?;
        if zi.len() != z.len() {
            return Err(Error::Shape("displacement dimension mismatch".into()));
        }
        for (a, b) in zi.iter_mut().zip(z) {
            *a += b;
        }
        self.site(&zi)
    }

    /// Distance between states; minimum-image convention on lattices.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.topology {
            Topology::General => self.positions[i]
                .iter()
                .zip(&self.positions[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Topology::PeriodicLattice { extents, h } => {
                let zi = multi_index_of(extents, i);
                let zj = multi_index_of(extents, j);
                let mut sq = 0.0;
                for ((a, b), &e) in zi.iter().zip(&zj).zip(extents) {
                    let delta = (a - b).rem_euclid(e as i64);
                    let wrapped = delta.min(e as i64 - delta) as f64;
                    sq += wrapped * wrapped;
                }
                h * sq.sqrt()
            }
        }
    }

    /// Site-wise `m`-weighted inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.m).map(|((x, y), w)| x * y * w).sum()
    }
}

/// Serialized form of a [`StateSpace`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub topology: String,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub extents: Option<Vec<usize>>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub m: Option<Vec<f64>>,
}

impl SpaceSpec {
    pub fn build(&self) -> Result<StateSpace> {
        match self.topology.as_str() {
            "lattice" => {
                let extents = self
                    .extents
                    .as_ref()
                    .ok_or_else(|| Error::Space("lattice requires extents".into()))?;
                let d = self.d.unwrap_or(extents.len());
                let space = make_lattice(d, extents, self.h.unwrap_or(1.0))?;
                if let Some(m) = &self.m {
                    if m != space.weights() {
                        return Err(Error::Space("lattice weights must equal h^d".into()));
                    }
                }
                Ok(space)
            }
            "general" => {
                let positions = self
                    .positions
                    .clone()
                    .ok_or_else(|| Error::Space("general space requires positions".into()))?;
                let m = self.m.clone().unwrap_or_else(|| vec![1.0; positions.len()]);
                let space = StateSpace::general(positions, m)?;
                if let Some(d) = self.d {
                    if d != space.dim() {
                        return Err(Error::Space("d does not match positions".into()));
                    }
                }
                Ok(space)
            }
            other => Err(Error::Space(format!("unknown topology {other:?}"))),
        }
    }
}

impl From<&StateSpace> for SpaceSpec {
    fn from(space: &StateSpace) -> Self {
        match &space.topology {
            Topology::PeriodicLattice { extents, h } => SpaceSpec {
                topology: "lattice".into(),
                d: Some(space.dim),
                extents: Some(extents.clone()),
                h: Some(*h),
                positions: Some(space.positions.clone()),
                m: Some(space.m.clone()),
            },
            Topology::General => SpaceSpec {
                topology: "general".into(),
                d: Some(space.dim),
                extents: None,
                h: None,
                positions: Some(space.positions.clone()),
                m: Some(space.m.clone()),
            },
        }
    }
}

impl StateSpace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpaceSpec::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SpaceSpec = serde_json::from_str(s)?;
        spec.build()
    }
}

/// Density of a probability measure with respect to the base measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDensity {
    rho: Vec<f64>,
}

impl ProbabilityDensity {
    /// Wraps `rho` after checking nonnegativity and normalization.
    pub fn new(space: &StateSpace, rho: Vec<f64>) -> Result<Self> {
        let d = ProbabilityDensity { rho };
        d.validate(space)?;
        Ok(d)
    }

    /// Rescales a nonnegative vector so that `Σ ρ_i m_i = 1`.
    pub fn normalized(space: &StateSpace, mut rho: Vec<f64>) -> Result<Self> {
        if rho.len() != space.len() {
            return Err(Error::Shape(format!(
                "density of length {} on {} states",
                rho.len(),
                space.len()
            )));
        }
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Density(format!(
                "entry {i} = {v} is not a finite nonnegative value"
            )));
        }
        let mass = space.inner(&rho, &vec![1.0; rho.len()]);
        if !(mass > 0.0) {
            return Err(Error::Density("zero total mass".into()));
        }
        rho.iter_mut().for_each(|v| *v /= mass);
        Ok(ProbabilityDensity { rho })
    }

    pub fn validate(&self, space: &StateSpace) -> Result<()> {
        if self.rho.len() != space.len() {
            return Err(Error::Shape(format!(
                "density of length {} on {} states",
                self.rho.len(),
                space.len()
            )));
        }
        if let Some((i, v)) = self
            .rho
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Density(format!("entry {i} = {v} is negative or not finite")));
        }
        let mass: f64 = self.mass(space);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Density(format!("total mass {mass} differs from 1")));
        }
        Ok(())
    }

    pub fn mass(&self, space: &StateSpace) -> f64 {
        self.rho.iter().zip(space.weights()).map(|(r, w)| r * w).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_values(self) -> Vec<f64> {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(1 − λ)·self + λ·other`.
    pub fn mix(&self, other: &ProbabilityDensity, lambda: f64) -> ProbabilityDensity {
        ProbabilityDensity {
            rho: self
                .rho
                .iter()
                .zip(&other.rho)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect(),
        }
    }

    /// Largest absolute difference between two densities.
    pub fn sup_distance(&self, other: &ProbabilityDensity) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Random density with entries drawn uniformly from `[floor, 1]` before
    /// normalization; `floor > 0` keeps it strictly positive.
    pub fn random<R: Rng + ?Sized>(space: &StateSpace, rng: &mut R, floor: f64) -> Self {
        let raw: Vec<f64> = (0..space.len()).map(|_| rng.random_range(floor..=1.0)).collect();
        Self::normalized(space, raw).expect("random weights are positive")
    }
}

pub fn uniform_density(space: &StateSpace) -> ProbabilityDensity {
    let total = space.total_mass();
    ProbabilityDensity {
        rho: vec![1.0 / total; space.len()],
    }
}

pub fn delta_density(space: &StateSpace, i: usize) -> Result<ProbabilityDensity> {
    if i >= space.len() {
        return Err(Error::Domain(format!(
            "state index {i} out of range for {} states",
            space.len()
        )));
    }
    let mut rho = vec![0.0; space.len()];
    rho[i] = 1.0 / space.weights()[i];
    Ok(ProbabilityDensity { rho })
}

/// Gaussian-shaped bump around site `center` (lattice distance), mixed with
/// the uniform density at level `floor`.
pub fn bump_density(space: &StateSpace, center: usize, width: f64, floor: f64) -> Result<ProbabilityDensity> {
    if center >= space.len() {
        return Err(Error::Domain(format!("center {center} out of range")));
    }
    if !(width > 0.0) || !(0.0..=1.0).contains(&floor) {
        return Err(Error::Domain("bump needs width > 0 and floor in [0,1]".into()));
    }
    let raw: Vec<f64> = (0..space.len())
        .map(|i| {
            let d = space.distance(center, i) / width;
            (-0.5 * d * d).exp()
        })
        .collect();
    let bump = ProbabilityDensity::normalized(space, raw)?;
    Ok(bump.mix(&uniform_density(space), floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_construction() {
        let s = make_lattice(1, &[4], 1.0).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.weights(), &[1.0; 4]);
        let s = make_lattice(2, &[3, 3], 0.5).unwrap();
        assert_eq!(s.len(), 9);
        assert!(s.weights().iter().all(|&w| w == 0.25));
        s.validate().unwrap();
        let ring2 = make_lattice(1, &[2], 1.0).unwrap();
        assert_eq!(ring2.distance(0, 1), 1.0);
    }

    #[test]
    fn lattice_rejects_bad_input() {
        assert!(make_lattice(3, &[2, 2, 2], 1.0).is_err());
        assert!(make_lattice(1, &[4], 0.0).is_err());
        assert!(make_lattice(1, &[4], -1.0).is_err());
        assert!(make_lattice(1, &[1], 1.0).is_err());
        assert!(make_lattice(2, &[4], 1.0).is_err());
    }

    #[test]
    fn general_space_invariants() {
        assert!(StateSpace::general(vec![vec![0.0]], vec![1.0]).is_err());
        assert!(StateSpace::general(vec![vec![0.0], vec![0.0]], vec![1.0, 1.0]).is_err());
        assert!(StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).is_err());
        let s = StateSpace::general(vec![vec![0.0], vec![3.0]], vec![1.0, 3.0]).unwrap();
        assert_eq!(s.distance(0, 1), 3.0);
    }

    #[test]
    fn densities() {
        let ring = make_lattice(1, &[4], 1.0).unwrap();
        let u = uniform_density(&ring);
        assert_eq!(u.values(), &[0.25; 4]);
        u.validate(&ring).unwrap();

        let s = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]).unwrap();
        assert_eq!(uniform_density(&s).values(), &[0.25, 0.25]);

        let s = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(delta_density(&s, 0).unwrap().values(), &[1.0, 0.0]);
        let s = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let d = delta_density(&s, 1).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0]);
        d.validate(&s).unwrap();
        assert!(delta_density(&s, 2).is_err());
    }

    #[test]
    fn validator_rejects_unnormalized() {
        let ring = make_lattice(1, &[4], 1.0).unwrap();
        assert!(ProbabilityDensity::new(&ring, vec![0.25, 0.25, 0.25, 0.26]).is_err());
        assert!(ProbabilityDensity::new(&ring, vec![0.5, 0.5, 0.25, -0.25]).is_err());
        assert!(ProbabilityDensity::new(&ring, vec![0.25; 3]).is_err());
    }

    #[test]
    fn minimum_image_is_a_metric() {
        for (d, extents, h) in [
            (1, vec![7], 1.0),
            (1, vec![64], 0.3),
            (2, vec![8, 8], 0.5),
            (2, vec![3, 5], 1.0),
        ] {
            let s = make_lattice(d, &extents, h).unwrap();
            let n = s.len();
            for i in 0..n {
                assert_eq!(s.distance(i, i), 0.0);
                for j in 0..n {
                    let dij = s.distance(i, j);
                    assert_eq!(dij, s.distance(j, i));
                    if i != j {
                        assert!(dij > 0.0);
                    }
                    for k in 0..n {
                        assert!(s.distance(i, k) <= dij + s.distance(j, k) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_indexing_roundtrip() {
        let s = make_lattice(2, &[3, 5], 1.0).unwrap();
        for i in 0..s.len() {
            let z = s.multi_index(i).unwrap();
            assert_eq!(s.site(&z).unwrap(), i);
            assert_eq!(s.shift(s.shift(i, &[1, -2]).unwrap(), &[-1, 2]).unwrap(), i);
        }
        assert_eq!(s.site(&[-1, 5]).unwrap(), s.site(&[2, 0]).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let s = make_lattice(2, &[3, 4], 0.5).unwrap();
        assert_eq!(StateSpace::from_json(&s.to_json().unwrap()).unwrap(), s);
        let short = r#"{"topology":"lattice","d":1,"extents":[6],"h":1.0}"#;
        assert_eq!(StateSpace::from_json(short).unwrap().len(), 6);
        let g = StateSpace::general(vec![vec![0.0, 1.0], vec![2.0, 1.0]], vec![0.5, 2.0]).unwrap();
        assert_eq!(StateSpace::from_json(&g.to_json().unwrap()).unwrap(), g);
        assert!(StateSpace::from_json(r#"{"topology":"torus"}"#).is_err());
    }

    #[test]
    fn bump_is_normalized_and_positive() {
        let s = make_lattice(1, &[16], 1.0).unwrap();
        let b = bump_density(&s, 3, 1.5, 0.1).unwrap();
        b.validate(&s).unwrap();
        assert!(b.min() > 0.0);
        let top = b.values().iter().cloned().fold(0.0, f64::max);
        assert_eq!(b.values()[3], top);
    }
}
