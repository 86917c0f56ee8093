//! Heat semigroup `ρ_t = e^{tL} ρ₀` of a reversible jump generator, with
//! entropy and Fisher information.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernels::{generator_matrix, EdgeWeights, JumpKernel, KernelForm};
use crate::numeric::{simpson, stable_sum};
use crate::spaces::{ProbabilityDensity, StateSpace};

/// Negative entries above `-CLIP_TOL` are rounding noise and are clipped.
pub const CLIP_TOL: f64 = 1e-13;

/// Mass drift tolerated by [`evolve`].
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DenseBackend {
    space: StateSpace,
    edges: EdgeWeights,
    generator: DMatrix<f64>,
}

#[derive(Clone)]
pub struct SpectralBackend {
    space: StateSpace,
    edges: EdgeWeights,
    extents: Vec<usize>,
    /// `η(ξ_k)` in site order.
    symbol: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBackend")
            .field("extents", &self.extents)
            .field("symbol", &self.symbol)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum SemigroupBackend {
    Dense(DenseBackend),
    Spectral(SpectralBackend),
}

impl SemigroupBackend {
    pub fn dense(kernel: &JumpKernel) -> Result<Self> {
        let l = generator_matrix(kernel);
        let n = l.len();
        let generator = DMatrix::from_fn(n, n, |i, j| l[i][j]);
        Ok(SemigroupBackend::Dense(DenseBackend {
            space: kernel.space().clone(),
            edges: kernel.edges().clone(),
            generator,
        }))
    }

    /// Requires a translation-invariant kernel on a periodic lattice.
    pub fn spectral(kernel: &JumpKernel) -> Result<Self> {
        let space = kernel.space();
        let (extents, _) = space.lattice().ok_or(Error::NotLattice)?;
        let weights = match kernel.form() {
            KernelForm::TranslationInvariant { weights } => weights,
            KernelForm::Dense => {
                return Err(Error::Hypothesis(
                    "spectral evolution needs a translation-invariant kernel".into(),
                ))
            }
        };
        let n = space.len();
        let mut symbol = vec![0.0; n];
        for (k, eta) in symbol.iter_mut().enumerate() {
            let freq = space.multi_index(k)?;
            let terms: Vec<f64> = weights
                .iter()
                .map(|(z, w)| {
                    let phase: f64 = freq
                        .iter()
                        .zip(z)
                        .zip(extents)
                        .map(|((&f, &c), &e)| {
                            // reduce before scaling to keep the phase exact
                            let r = (f * c).rem_euclid(e as i64) as f64;
                            2.0 * std::f64::consts::PI * r / e as f64
                        })
                        .sum();
                    w * (phase.cos() - 1.0)
                })
                .collect();
            *eta = stable_sum(&terms).min(0.0);
        }
        let mut planner = FftPlanner::new();
        let forward = extents.iter().map(|&e| planner.plan_fft_forward(e)).collect();
        let inverse = extents.iter().map(|&e| planner.plan_fft_inverse(e)).collect();
        Ok(SemigroupBackend::Spectral(SpectralBackend {
            space: space.clone(),
            edges: kernel.edges().clone(),
            extents: extents.to_vec(),
            symbol,
            forward,
            inverse,
        }))
    }

    /// Spectral when the kernel allows it, dense otherwise.
    pub fn auto(kernel: &JumpKernel) -> Result<Self> {
        if kernel.is_translation_invariant() {
            Self::spectral(kernel)
        } else {
            Self::dense(kernel)
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SemigroupBackend::Dense(_) => "dense",
            SemigroupBackend::Spectral(_) => "spectral",
        }
    }

    pub fn space(&self) -> &StateSpace {
        match self {
            SemigroupBackend::Dense(b) => &b.space,
            SemigroupBackend::Spectral(b) => &b.space,
        }
    }

    pub fn edges(&self) -> &EdgeWeights {
        match self {
            SemigroupBackend::Dense(b) => &b.edges,
            SemigroupBackend::Spectral(b) => &b.edges,
        }
    }

    /// Symbol values in site order (spectral backend only).
    pub fn symbol(&self) -> Option<&[f64]> {
        match self {
            SemigroupBackend::Dense(_) => None,
            SemigroupBackend::Spectral(b) => Some(&b.symbol),
        }
    }

    /// CSV with columns `index, k_0, …, k_{d−1}, eta`.
    pub fn write_symbol_csv<W: Write>(&self, out: W) -> Result<()> {
        let SemigroupBackend::Spectral(b) = self else {
            return Err(Error::Hypothesis("only the spectral backend has a symbol".into()));
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((0..b.extents.len()).map(|a| format!("k{a}")));
        header.push("eta".into());
        w.write_record(&header).map_err(csv_err)?;
        for (i, eta) in b.symbol.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(b.space.multi_index(i)?.iter().map(|c| c.to_string()));
            row.push(format!("{eta:e}"));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(())
    }

    /// `e^{tL}` as a dense matrix.
    pub fn transition_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        match self {
            SemigroupBackend::Dense(b) => Ok((&b.generator * t).exp()),
            SemigroupBackend::Spectral(_) => {
                let n = self.space().len();
                let mut p = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    let col = self.apply(&e, t)?;
                    p.set_column(j, &DVector::from_vec(col));
                }
                Ok(p)
            }
        }
    }

    /// Raw `e^{tL} v` without clipping.
    pub fn apply(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let n = self.space().len();
        if v.len() != n {
            return Err(Error::Shape(format!("vector of length {} on {n} states", v.len())));
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        match self {
            SemigroupBackend::Dense(b) => {
                let p = (&b.generator * t).exp();
                Ok((p * DVector::from_column_slice(v)).iter().copied().collect())
            }
            SemigroupBackend::Spectral(b) => {
                let mut data: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                transform(&mut data, &b.extents, &b.forward);
                for (c, eta) in data.iter_mut().zip(&b.symbol) {
                    *c *= (t * eta).exp();
                }
                transform(&mut data, &b.extents, &b.inverse);
                let scale = 1.0 / n as f64;
                Ok(data.iter().map(|c| c.re * scale).collect())
            }
        }
    }

    pub fn evolve(&self, rho0: &ProbabilityDensity, t: f64) -> Result<ProbabilityDensity> {
        evolve(rho0, t, self)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// In-place multidimensional transform, axis by axis (last axis fastest).
fn transform(data: &mut [Complex64], extents: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    let n = data.len();
    let mut stride = 1;
    for axis in (0..extents.len()).rev() {
        let e = extents[axis];
        let plan = &plans[axis];
        let mut line = vec![Complex64::new(0.0, 0.0); e];
        let block = e * stride;
        for outer in (0..n).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, c) in line.iter_mut().enumerate() {
                    *c = data[base + k * stride];
                }
                plan.process(&mut line);
                for (k, c) in line.iter().enumerate() {
                    data[base + k * stride] = *c;
                }
            }
        }
        stride *= e;
    }
}

/// `ρ_t = e^{tL} ρ₀`. Negatives above `-CLIP_TOL` are clipped and the
/// result renormalized; `t = 0` returns `ρ₀` unchanged.
pub fn evolve(rho0: &ProbabilityDensity, t: f64, backend: &SemigroupBackend) -> Result<ProbabilityDensity> {
    check_time(t)?;
    let space = backend.space();
    if rho0.len() != space.len() {
        return Err(Error::Shape(format!(
            "density has {} entries, backend has {} states",
            rho0.len(),
            space.len()
        )));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let mut rho = backend.apply(rho0.values(), t)?;
    let scale = rho0.values().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let mut clipped = false;
    for (index, v) in rho.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -CLIP_TOL * scale {
                return Err(Error::Negativity { index, value: *v });
            }
            *v = 0.0;
            clipped = true;
        }
    }
    let m = space.weights();
    let before = rho0.mass(space);
    let terms: Vec<f64> = rho.iter().zip(m).map(|(r, w)| r * w).collect();
    let after = stable_sum(&terms);
    if clipped {
        for v in rho.iter_mut() {
            *v *= before / after;
        }
    } else if (after - before).abs() > MASS_TOL * before.max(1.0) {
        return Err(Error::Domain(format!(
            "evolution changed the mass from {before} to {after}"
        )));
    }
    ProbabilityDensity::new(space, rho)
}

/// `ℋ(ρ) = Σ_i ρ_i log ρ_i m_i` with `0 log 0 = 0`.
pub fn entropy(rho: &[f64], space: &StateSpace) -> f64 {
    let terms: Vec<f64> = rho
        .iter()
        .zip(space.weights())
        .map(|(&r, &w)| if r > 0.0 { r * r.ln() * w } else { 0.0 })
        .collect();
    stable_sum(&terms)
}

/// `ℐ(ρ) = Σ_{i<j} (ρ_j − ρ_i)(log ρ_j − log ρ_i) γ_ij`; `+∞` when an edge
/// sees exactly one zero, and edges with two zeros contribute nothing.
pub fn fisher_information(rho: &[f64], edges: &EdgeWeights) -> f64 {
    let mut terms = Vec::with_capacity(edges.len());
    for (&(i, j), &g) in edges.pairs().iter().zip(edges.gamma()) {
        let (a, b) = (rho[i], rho[j]);
        if a <= 0.0 && b <= 0.0 {
            continue;
        }
        if a <= 0.0 || b <= 0.0 {
            return f64::INFINITY;
        }
        terms.push((b - a) * (b.ln() - a.ln()) * g);
    }
    stable_sum(&terms)
}

/// Both sides of `ℋ(ρ_t) − ℋ(ρ_s) = −∫_s^t ℐ(ρ_r) dr`, the integral by
/// composite Simpson with `steps` panels in logarithmic time when `s > 0`.
pub fn entropy_dissipation_check(
    rho0: &ProbabilityDensity,
    s: f64,
    t: f64,
    steps: usize,
    backend: &SemigroupBackend,
) -> Result<(f64, f64)> {
    if !(s >= 0.0 && s < t) {
        return Err(Error::Domain(format!("need 0 ≤ s < t, got s={s}, t={t}")));
    }
    let space = backend.space();
    let edges = backend.edges();
    let rho_s = evolve(rho0, s, backend)?;
    let rho_t = evolve(rho0, t, backend)?;
    if fisher_information(rho_s.values(), edges).is_infinite() {
        return Err(Error::Domain("Fisher information is infinite at the start time".into()));
    }
    let lhs = entropy(rho_t.values(), space) - entropy(rho_s.values(), space);
    let mut failure = None;
    let mut integrand = |r: f64| match evolve(rho0, r, backend) {
        Ok(rho) => fisher_information(rho.values(), edges),
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let integral = if s > 0.0 {
        // r = s (t/s)^u resolves the early transient
        let ratio = (t / s).ln();
        simpson(
            |u| {
                let r = if u >= 1.0 { t } else { s * (u * ratio).exp() };
                integrand(r) * r * ratio
            },
            0.0,
            1.0,
            steps,
        )
    } else {
        simpson(integrand, s, t, steps)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((lhs, -integral))
}

/// Whether every entry of `e^{tL}` is strictly positive.
pub fn heat_kernel_positivity(kernel: &JumpKernel, t: f64) -> Result<bool> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("positivity needs t > 0, got {t}")));
    }
    let p = SemigroupBackend::dense(kernel)?.transition_matrix(t)?;
    Ok(p.iter().all(|&x| x > 0.0))
}

/// Graph-side counterpart of [`heat_kernel_positivity`].
pub fn structural_positivity(kernel: &JumpKernel) -> bool {
    kernel.edges().is_connected()
}

/// Eigenvalues of `L` (self-adjoint in the `m`-inner product), descending.
pub fn generator_spectrum(kernel: &JumpKernel) -> Vec<f64> {
    let m = kernel.space().weights();
    let n = m.len();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (&(i, j), &g) in kernel.edges().pairs().iter().zip(kernel.edges().gamma()) {
        let off = g / (m[i] * m[j]).sqrt();
        s[(i, j)] += off;
        s[(j, i)] += off;
        s[(i, i)] -= g / m[i];
        s[(j, j)] -= g / m[j];
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `|λ₂|`, zero for disconnected kernels.
pub fn spectral_gap(kernel: &JumpKernel) -> f64 {
    let ev = generator_spectrum(kernel);
    ev.get(1).map(|l| l.abs()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_fractional;
    use crate::spaces::{delta_density, make_lattice, uniform_density};

    fn ring(n: usize, alpha: f64) -> JumpKernel {
        let s = make_lattice(1, &[n], 1.0 / n as f64).unwrap();
        build_fractional(&s, alpha, n / 2 - 1, 1.0).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let s = make_lattice(1, &[5], 1.0).unwrap();
        let u = uniform_density(&s);
        assert!((entropy(u.values(), &s) + (5.0f64).ln()).abs() < 1e-15);
        let d = delta_density(&s, 2).unwrap();
        assert_eq!(entropy(d.values(), &s), 0.0);
    }

    #[test]
    fn fisher_examples() {
        let e = EdgeWeights::from_pairs(2, &[((0, 1), 1.0)]).unwrap();
        assert!((fisher_information(&[0.25, 0.75], &e) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert_eq!(fisher_information(&[1.0, 0.0], &e), f64::INFINITY);
        assert_eq!(fisher_information(&[0.5, 0.5], &e), 0.0);
        let e3 = EdgeWeights::from_pairs(3, &[((0, 1), 1.0), ((1, 2), 1.0)]).unwrap();
        assert!(fisher_information(&[3.0, 0.0, 0.0], &e3).is_infinite());
        assert_eq!(
            fisher_information(&[0.0, 0.0, 3.0], &EdgeWeights::from_pairs(3, &[((0, 1), 1.0)]).unwrap()),
            0.0
        );
    }

    #[test]
    fn symbol_is_nonpositive_and_vanishes_at_zero() {
        let k = ring(16, 1.0);
        let b = SemigroupBackend::spectral(&k).unwrap();
        let eta = b.symbol().unwrap();
        assert_eq!(eta[0], 0.0);
        assert!(eta.iter().all(|&x| x <= 0.0));
        // symbol values are the generator eigenvalues
        let mut a: Vec<f64> = eta.to_vec();
        a.sort_by(|x, y| y.total_cmp(x));
        let ev = generator_spectrum(&k);
        for (x, y) in a.iter().zip(&ev) {
            assert!((x - y).abs() < 1e-9 * ev[15].abs());
        }
    }

    #[test]
    fn backends_agree_in_two_dimensions() {
        let s = make_lattice(2, &[4, 6], 0.25).unwrap();
        let k = build_fractional(&s, 1.2, 1, 1.0).unwrap();
        let d = SemigroupBackend::dense(&k).unwrap();
        let f = SemigroupBackend::spectral(&k).unwrap();
        let rho = delta_density(&s, 7).unwrap();
        let a = evolve(&rho, 0.3, &d).unwrap();
        let b = evolve(&rho, 0.3, &f).unwrap();
        assert!(a.sup_distance(&b) < 1e-10);
    }

    #[test]
    fn time_zero_is_exact_and_negative_time_fails() {
        let k = ring(8, 1.0);
        let b = SemigroupBackend::dense(&k).unwrap();
        let rho = delta_density(k.space(), 3).unwrap();
        assert_eq!(evolve(&rho, 0.0, &b).unwrap(), rho);
        assert!(evolve(&rho, -1.0, &b).is_err());
    }

    #[test]
    fn spectral_rejects_dense_kernels() {
        let s = make_lattice(1, &[3], 1.0).unwrap();
        let k = JumpKernel::dense(&s, vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 2.0], vec![0.0, 2.0, 0.0]]).unwrap();
        assert!(matches!(SemigroupBackend::spectral(&k), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn disconnected_kernel_is_not_positive() {
        let s = make_lattice(1, &[4], 1.0).unwrap();
        let mut r = vec![vec![0.0; 4]; 4];
        r[0][1] = 1.0;
        r[1][0] = 1.0;
        r[2][3] = 1.0;
        r[3][2] = 1.0;
        let k = JumpKernel::dense(&s, r).unwrap();
        assert!(!heat_kernel_positivity(&k, 1.0).unwrap());
        assert!(!structural_positivity(&k));
        assert_eq!(spectral_gap(&k), 0.0);
    }

    #[test]
    fn symbol_csv_has_one_row_per_frequency() {
        let k = ring(8, 1.0);
        let b = SemigroupBackend::spectral(&k).unwrap();
        let mut buf = Vec::new();
        b.write_symbol_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("index,k0,eta"));
    }
}
