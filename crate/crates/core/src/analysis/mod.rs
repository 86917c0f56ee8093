//! Verification harness. Every check produces a [`CheckReport`] with the
//! measured quantities and the slack against the claimed bound.

mod suite;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::action::{action, convolve_density, convolve_momentum, truncated_flux_norm, LatticeKernel, MomentumField};
use crate::dynamics::path_action;
use crate::error::{Error, Result};
use crate::geodesic::{constant_speed_deviation, recover_potential, solve_geodesic, GeodesicResult, SolverConfig};
use crate::kernels::{integrability_constant, second_moment, JumpKernel};
use crate::means::{action_density, check_mean_properties, Mean};
use crate::semigroup::{entropy, entropy_dissipation_check, evolve, fisher_information, SemigroupBackend};
use crate::spaces::{ProbabilityDensity, StateSpace};

pub use suite::{
    criterion, dense_fixture, ring_fixture, run_criterion, run_suite, Criterion, SuiteSettings, CRITERIA,
    W1_SELF_TEST_FACTOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub name: String,
    /// SHA-256 of the canonical JSON of the check inputs.
    pub inputs_digest: String,
    #[serde(with = "nonfinite::map")]
    pub measured: BTreeMap<String, f64>,
    /// Claimed bound minus measured value.
    #[serde(with = "nonfinite")]
    pub slack: f64,
    #[serde(with = "nonfinite")]
    pub tolerance: f64,
    pub pass: bool,
    /// Negative controls are recorded but never asserted.
    pub asserted: bool,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, digest: String, measured: &[(&str, f64)], slack: f64, tolerance: f64) -> Self {
        CheckReport {
            name: name.into(),
            inputs_digest: digest,
            measured: measured.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            slack,
            tolerance,
            pass: slack >= -tolerance,
            asserted: true,
            runtime_ms: 0.0,
            note: None,
        }
    }

    pub fn negative_control(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// False only for asserted checks that fail.
    pub fn ok(&self) -> bool {
        self.pass || !self.asserted
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Non-finite floats travel as the strings `"inf"`, `"-inf"` and `"nan"`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Number(f64),
        Text(String),
    }

    impl From<f64> for Repr {
        fn from(v: f64) -> Self {
            if v.is_finite() {
                Repr::Number(v)
            } else if v.is_nan() {
                Repr::Text("nan".into())
            } else if v > 0.0 {
                Repr::Text("inf".into())
            } else {
                Repr::Text("-inf".into())
            }
        }
    }

    impl Repr {
        fn value<E: serde::de::Error>(self) -> Result<f64, E> {
            match self {
                Repr::Number(v) => Ok(v),
                Repr::Text(t) => match t.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(E::custom(format!("not a number: {other}"))),
                },
            }
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Repr::from(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Repr::deserialize(d)?.value()
    }

    pub mod map {
        use std::collections::BTreeMap;

        use super::Repr;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let repr: BTreeMap<&String, Repr> = m.iter().map(|(k, v)| (k, Repr::from(*v))).collect();
            repr.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, v)| v.value().map(|x| (k, x)))
                .collect()
        }
    }
}

pub fn write_json_lines<W: Write>(reports: &[CheckReport], mut out: W) -> Result<()> {
    for r in reports {
        writeln!(out, "{}", r.to_json_line()?).map_err(|e| Error::Serde(e.to_string()))?;
    }
    Ok(())
}

/// Summary CSV: `name, pass, slack, tolerance, runtime_ms`.
pub fn write_summary_csv<W: Write>(reports: &[CheckReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(["name", "pass", "slack", "tolerance", "runtime_ms"])
        .map_err(err)?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.pass.to_string(),
            format!("{:e}", r.slack),
            format!("{:e}", r.tolerance),
            format!("{:.3}", r.runtime_ms),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

/// Hex SHA-256 of the compact JSON encoding.
pub fn digest(value: &serde_json::Value) -> String {
    let bytes = Sha256::digest(value.to_string().as_bytes());
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn timed(f: impl FnOnce() -> Result<Vec<CheckReport>>) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let mut reports = f()?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    for r in &mut reports {
        r.runtime_ms = ms;
    }
    Ok(reports)
}

fn timed_one(f: impl FnOnce() -> Result<CheckReport>) -> Result<CheckReport> {
    let mut v = timed(|| f().map(|r| vec![r]))?;
    Ok(v.remove(0))
}

/// Worst violations of the mean axioms; the arithmetic mean must violate
/// vanishing on the boundary.
pub fn mean_axiom_checks(means: &[Mean], samples: usize, seed: u64, tol: f64) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for &mean in means {
        let start = Instant::now();
        let report = check_mean_properties(mean, samples, seed);
        let d = digest(&json!({"mean": mean.tag(), "samples": samples, "seed": seed}));
        let mut measured: Vec<(&str, f64)> = report.entries().to_vec();
        measured.push(("worst", report.worst()));
        let mut r = if mean == Mean::Arithmetic {
            // self-test: the detector must see the boundary violation
            CheckReport::new(
                format!("mean_self_test_{}_fails_vanishing", mean.tag()),
                d,
                &measured,
                report.vanishing_on_boundary - tol,
                0.0,
            )
        } else {
            CheckReport::new(
                format!("mean_axioms_{}", mean.tag()),
                d,
                &measured,
                -report.worst(),
                tol,
            )
        };
        r.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        out.push(r);
    }
    out
}

/// Homogeneity and convexity of `α(w, s, t)` on random triples with
/// `w ∈ [−10, 10]`, `s, t ∈ (0, 10]`. Violations are relative to
/// `max(1, |rhs|)`.
pub fn action_density_check(mean: Mean, samples: usize, seed: u64, tol: f64) -> CheckReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = |rng: &mut ChaCha8Rng| 10.0 * (1.0 - rng.random::<f64>());
    let mut homogeneity = 0.0f64;
    let mut convexity = 0.0f64;
    for _ in 0..samples {
        let (w0, s0, t0) = (rng.random_range(-10.0..=10.0), pos(&mut rng), pos(&mut rng));
        let (w1, s1, t1) = (rng.random_range(-10.0..=10.0), pos(&mut rng), pos(&mut rng));
        let lambda = pos(&mut rng);
        let tau: f64 = rng.random();
        let a0 = action_density(w0, s0, t0, mean);
        let a1 = action_density(w1, s1, t1, mean);
        let scaled = action_density(lambda * w0, lambda * s0, lambda * t0, mean);
        homogeneity = homogeneity.max((scaled - lambda * a0).abs() / (lambda * a0).max(1.0));
        let mixed = action_density(
            (1.0 - tau) * w0 + tau * w1,
            (1.0 - tau) * s0 + tau * s1,
            (1.0 - tau) * t0 + tau * t1,
            mean,
        );
        let rhs = (1.0 - tau) * a0 + tau * a1;
        convexity = convexity.max((mixed - rhs) / rhs.max(1.0));
    }
    let d = digest(&json!({"mean": mean.tag(), "samples": samples, "seed": seed}));
    let mut r = CheckReport::new(
        format!("action_density_{}", mean.tag()),
        d,
        &[("homogeneity", homogeneity), ("convexity", convexity)],
        -homogeneity.max(convexity),
        tol,
    );
    r.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    r
}

/// Exact `W₁` on a one-dimensional periodic lattice: the minimum over
/// shifts `c` of `Σ_i |F₀(i) − F₁(i) − c| h`, attained at a median.
pub fn w1_distance_1d(mu0: &ProbabilityDensity, mu1: &ProbabilityDensity, space: &StateSpace) -> Result<f64> {
    let (extents, h) = space.lattice().ok_or(Error::NotLattice)?;
    if extents.len() != 1 {
        return Err(Error::Hypothesis(format!(
            "W1 needs a 1D lattice, got dimension {}",
            extents.len()
        )));
    }
    mu0.validate(space)?;
    mu1.validate(space)?;
    let m = space.weights();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = mu0
        .values()
        .iter()
        .zip(mu1.values())
        .zip(m)
        .map(|((a, b), w)| {
            acc += (a - b) * w;
            acc
        })
        .collect();
    let mut sorted = cdf.clone();
    sorted.sort_by(f64::total_cmp);
    let c = sorted[sorted.len() / 2];
    for v in cdf.iter_mut() {
        *v = (*v - c).abs() * h;
    }
    Ok(crate::numeric::stable_sum(&cdf))
}

/// A kernel, mean and solver configuration shared by the structural checks.
#[derive(Debug, Clone)]
pub struct Harness {
    kernel: JumpKernel,
    backend: SemigroupBackend,
    mean: Mean,
    config: SolverConfig,
}

impl Harness {
    pub fn new(kernel: JumpKernel, mean: Mean, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let backend = SemigroupBackend::auto(&kernel)?;
        Ok(Harness {
            kernel,
            backend,
            mean,
            config,
        })
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn mean(&self) -> Mean {
        self.mean
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn backend(&self) -> &SemigroupBackend {
        &self.backend
    }

    pub fn with_config(&self, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Harness { config, ..self.clone() })
    }

    fn require_translation_invariant(&self, what: &str) -> Result<()> {
        if self.kernel.is_translation_invariant() {
            Ok(())
        } else {
            Err(Error::Hypothesis(format!(
                "{what} needs a translation-invariant kernel on a periodic lattice"
            )))
        }
    }

    fn digest(&self, extra: serde_json::Value) -> String {
        digest(&json!({
            "m": self.kernel.space().weights(),
            "rates": self.kernel.rates(),
            "mean": self.mean.tag(),
            "config": self.config,
            "inputs": extra,
        }))
    }

    /// Converged solve with finite distance, or an error.
    pub fn solve(&self, a: &ProbabilityDensity, b: &ProbabilityDensity) -> Result<GeodesicResult> {
        let res = solve_geodesic(a, b, &self.kernel, self.mean, &self.config)?;
        if !res.w.is_finite() {
            return Err(Error::Domain(res.note.unwrap_or_else(|| "infinite distance".into())));
        }
        if !res.converged {
            return Err(Error::NotConverged(format!(
                "geodesic solve stopped after {} iterations",
                res.iterations
            )));
        }
        Ok(res)
    }

    pub fn distance(&self, a: &ProbabilityDensity, b: &ProbabilityDensity) -> Result<f64> {
        Ok(self.solve(a, b)?.w)
    }

    /// `D = [𝒲²(P_{t+dt}μ, σ) − 𝒲²(P_tμ, σ)]/(2dt) + ℋ(P_tμ) − ℋ(σ)` at
    /// `dt` and `dt/2`; the `dt/2` value is asserted against
    /// `tol · max(1, 𝒲²)`.
    pub fn evi_check(
        &self,
        mu: &ProbabilityDensity,
        sigma: &ProbabilityDensity,
        t: f64,
        dt: Option<f64>,
        tol: f64,
    ) -> Result<CheckReport> {
        self.require_translation_invariant("the EVI check")?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!("EVI needs t > 0, got {t}")));
        }
        let dt = dt.unwrap_or(t / 10.0);
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("EVI needs dt > 0, got {dt}")));
        }
        let space = self.kernel.space();
        timed_one(|| {
            let rho_t = evolve(mu, t, &self.backend)?;
            let w2_t = self.distance(&rho_t, sigma)?.powi(2);
            let gap = entropy(rho_t.values(), space) - entropy(sigma.values(), space);
            let quotient = |h: f64| -> Result<f64> {
                let rho = evolve(mu, t + h, &self.backend)?;
                let w2 = self.distance(&rho, sigma)?.powi(2);
                Ok((w2 - w2_t) / (2.0 * h) + gap)
            };
            let d_full = quotient(dt)?;
            let d_half = quotient(0.5 * dt)?;
            let tolerance = tol * w2_t.max(1.0);
            let d = self.digest(json!({"mu": mu.values(), "sigma": sigma.values(), "t": t, "dt": dt}));
            Ok(CheckReport::new(
                format!("evi_t{t}"),
                d,
                &[
                    ("D_dt", d_full),
                    ("D_half_dt", d_half),
                    ("W2", w2_t),
                    ("entropy_gap", gap),
                    ("t", t),
                    ("dt", dt),
                ],
                -d_half,
                tolerance,
            ))
        })
    }

    /// Largest excess of `ℋ(ρᵏ)` over the linear interpolation of the
    /// endpoint entropies along the discrete geodesic. Non-logarithmic
    /// means are recorded as negative controls.
    pub fn entropy_convexity(
        &self,
        mu0: &ProbabilityDensity,
        mu1: &ProbabilityDensity,
        tol: f64,
    ) -> Result<CheckReport> {
        self.require_translation_invariant("geodesic convexity of the entropy")?;
        timed_one(|| {
            let res = self.solve(mu0, mu1)?;
            let path = res
                .path
                .as_ref()
                .ok_or_else(|| Error::Domain("solver returned no path".into()))?;
            let space = self.kernel.space();
            let dens = path.densities();
            let k = path.intervals();
            let h0 = entropy(&dens[0], space);
            let h1 = entropy(&dens[k], space);
            let mut excess = if k < 2 { 0.0 } else { f64::NEG_INFINITY };
            for (i, rho) in dens.iter().enumerate().take(k).skip(1) {
                let s = i as f64 / k as f64;
                excess = excess.max(entropy(rho, space) - ((1.0 - s) * h0 + s * h1));
            }
            let d = self.digest(json!({"mu0": mu0.values(), "mu1": mu1.values()}));
            let r = CheckReport::new(
                format!("entropy_convexity_{}", self.mean.tag()),
                d,
                &[("max_excess", excess), ("W", res.w), ("H0", h0), ("H1", h1)],
                -excess,
                tol,
            );
            Ok(if self.mean == Mean::Logarithmic {
                r
            } else {
                r.negative_control().with_note("no convexity claim for this mean")
            })
        })
    }

    /// Potential recovery along the geodesic and agreement of the
    /// potential-form action with `𝒲²`.
    pub fn potential_form_check(
        &self,
        mu0: &ProbabilityDensity,
        mu1: &ProbabilityDensity,
        tol: f64,
    ) -> Result<Vec<CheckReport>> {
        self.require_translation_invariant("the potential form")?;
        let edges = self.kernel.edges();
        for (name, mu) in [("mu0", mu0), ("mu1", mu1)] {
            if fisher_information(mu.values(), edges).is_infinite() {
                return Err(Error::Hypothesis(format!("{name} has infinite Fisher information")));
            }
        }
        timed(|| {
            let res = self.solve(mu0, mu1)?;
            let path = res
                .path
                .as_ref()
                .ok_or_else(|| Error::Domain("solver returned no path".into()))?;
            let m = self.kernel.space().weights();
            let dt = path.dt();
            let mut residual = 0.0f64;
            let mut actions = Vec::with_capacity(path.intervals());
            for k in 1..=path.intervals() {
                let rho = path.midpoint(k);
                let (psi, r) = recover_potential(&rho, &path.momenta()[k - 1], edges, m, self.mean)?;
                residual = residual.max(r);
                let nu = MomentumField::from_potential(edges, &rho, &psi, self.mean);
                actions.push(dt * action(&rho, &nu, edges, self.mean)?);
            }
            let potential = path.horizon() * crate::numeric::stable_sum(&actions);
            let w2 = res.w * res.w;
            let gap = if w2 > 0.0 {
                (potential - w2).abs() / w2
            } else {
                potential.abs()
            };
            let d = self.digest(json!({"mu0": mu0.values(), "mu1": mu1.values()}));
            Ok(vec![
                CheckReport::new(
                    "tangency_residual",
                    d.clone(),
                    &[("max_residual", residual)],
                    -residual,
                    tol,
                ),
                CheckReport::new(
                    "potential_form",
                    d,
                    &[("W2", w2), ("potential_action", potential), ("relative_gap", gap)],
                    -gap,
                    tol,
                ),
            ])
        })
    }

    /// Symmetry, identity, separation, triangle inequality and mixture
    /// convexity over random strictly positive triples.
    pub fn metric_axiom_suite(&self, trials: usize, seed: u64, floor: f64) -> Result<Vec<CheckReport>> {
        let space = self.kernel.space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        timed(|| {
            let mut symmetry = 0.0f64;
            let mut identity = 0.0f64;
            let mut separation = f64::INFINITY;
            let mut triangle = f64::INFINITY;
            let mut mixture = f64::INFINITY;
            let mut scale = 0.0f64;
            let mut triangle_raw = Vec::new();
            let mut mixture_raw = Vec::new();
            for _ in 0..trials {
                let a = ProbabilityDensity::random(space, &mut rng, floor);
                let b = ProbabilityDensity::random(space, &mut rng, floor);
                let c = ProbabilityDensity::random(space, &mut rng, floor);
                let tau: f64 = rng.random();
                let ab = self.distance(&a, &b)?;
                let ba = self.distance(&b, &a)?;
                let bc = self.distance(&b, &c)?;
                let ac = self.distance(&a, &c)?;
                identity = identity.max(self.distance(&a, &a)?);
                symmetry = symmetry.max((ab - ba).abs() / ab.max(f64::MIN_POSITIVE));
                for (x, y, w) in [(&a, &b, ab), (&b, &c, bc), (&a, &c, ac)] {
                    if x.sup_distance(y) >= 1e-3 {
                        separation = separation.min(w);
                    }
                }
                let mixed = self.distance(&b.mix(&a, 1.0 - tau), &c.mix(&b, 1.0 - tau))?;
                scale = scale.max(ab).max(bc).max(ac);
                triangle_raw.push(ab + bc - ac);
                mixture_raw.push(tau * bc * bc + (1.0 - tau) * ab * ab - mixed * mixed);
            }
            for v in &triangle_raw {
                triangle = triangle.min(*v);
            }
            for v in &mixture_raw {
                mixture = mixture.min(*v);
            }
            let d = self.digest(json!({"trials": trials, "seed": seed, "floor": floor}));
            Ok(vec![
                CheckReport::new(
                    "metric_symmetry",
                    d.clone(),
                    &[("max_relative_asymmetry", symmetry)],
                    -symmetry,
                    1e-6,
                ),
                CheckReport::new(
                    "metric_identity",
                    d.clone(),
                    &[("max_self_distance", identity)],
                    -identity,
                    1e-12,
                ),
                CheckReport::new(
                    "metric_separation",
                    d.clone(),
                    &[("min_distance", separation)],
                    separation - 1e-9 * scale,
                    0.0,
                ),
                CheckReport::new(
                    "metric_triangle",
                    d.clone(),
                    &[("min_triangle_slack", triangle), ("scale", scale)],
                    triangle,
                    2e-3 * scale,
                ),
                CheckReport::new(
                    "metric_mixture_convexity",
                    d,
                    &[("min_convexity_slack", mixture), ("scale", scale)],
                    mixture,
                    2e-3 * scale * scale,
                ),
            ])
        })
    }

    /// `W₁ ≤ (M/√2)·𝒲` on a 1D lattice with `M` scaled by `moment_factor`
    /// (1 for the claim, below 1 for the self-test).
    pub fn w1_bound_check(
        &self,
        pairs: &[(ProbabilityDensity, ProbabilityDensity)],
        tol: f64,
        moment_factor: f64,
    ) -> Result<CheckReport> {
        let space = self.kernel.space();
        let m_const = second_moment(&self.kernel).sqrt() * moment_factor;
        timed_one(|| {
            let mut slack = f64::INFINITY;
            let mut tightest = 0.0f64;
            for (a, b) in pairs {
                let w1 = w1_distance_1d(a, b, space)?;
                let w = self.distance(a, b)?;
                let bound = m_const / std::f64::consts::SQRT_2 * w;
                slack = slack.min(bound - w1);
                if bound > 0.0 {
                    tightest = tightest.max(w1 / bound);
                }
            }
            let d = self.digest(json!({"pairs": pairs.len(), "moment_factor": moment_factor,
                "first": pairs.first().map(|p| p.0.values().to_vec())}));
            let name = if moment_factor == 1.0 {
                "w1_lower_bound".to_string()
            } else {
                format!("w1_lower_bound_moment_x{moment_factor}")
            };
            Ok(CheckReport::new(
                name,
                d,
                &[("M", m_const), ("min_slack", slack), ("max_ratio", tightest)],
                slack,
                tol,
            ))
        })
    }

    /// `𝒜(k∗ρ, k∗ν) ≤ 𝒜(ρ, ν)` and `𝒲(k∗μ₀, k∗μ₁) ≤ 𝒲(μ₀, μ₁)` for random
    /// lattice convolutions `k`.
    pub fn convolution_monotonicity(&self, trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
        self.require_translation_invariant("convolution monotonicity")?;
        let space = self.kernel.space();
        let edges = self.kernel.edges();
        let dim = space.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        timed(|| {
            let mut action_slack = f64::INFINITY;
            let mut distance_slack = f64::INFINITY;
            let mut scale = 0.0f64;
            for _ in 0..trials {
                let count = rng.random_range(1..=3);
                let raw: Vec<(Vec<i64>, f64)> = (0..count)
                    .map(|_| {
                        let z: Vec<i64> = (0..dim).map(|_| rng.random_range(-2..=2)).collect();
                        (z, rng.random_range(0.1..=1.0))
                    })
                    .collect();
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                let k = LatticeKernel::new(raw.into_iter().map(|(z, w)| (z, w / total)).collect())?;

                let rho = ProbabilityDensity::random(space, &mut rng, 0.01);
                let nu = MomentumField::new(edges, (0..edges.len()).map(|_| rng.random_range(-1.0..=1.0)).collect())?;
                let a = action(rho.values(), &nu, edges, self.mean)?;
                let rho_k = convolve_density(space, rho.values(), &k)?;
                let nu_k = convolve_momentum(space, edges, &nu, &k)?;
                let a_k = action(&rho_k, &nu_k, edges, self.mean)?;
                action_slack = action_slack.min((a - a_k) / a.max(f64::MIN_POSITIVE));

                let mu0 = ProbabilityDensity::random(space, &mut rng, 0.05);
                let mu1 = ProbabilityDensity::random(space, &mut rng, 0.05);
                let w = self.distance(&mu0, &mu1)?;
                let c0 = ProbabilityDensity::normalized(space, convolve_density(space, mu0.values(), &k)?)?;
                let c1 = ProbabilityDensity::normalized(space, convolve_density(space, mu1.values(), &k)?)?;
                let w_k = self.distance(&c0, &c1)?;
                scale = scale.max(w);
                distance_slack = distance_slack.min(w - w_k);
            }
            let d = self.digest(json!({"trials": trials, "seed": seed}));
            Ok(vec![
                CheckReport::new(
                    "convolution_action",
                    d.clone(),
                    &[("min_relative_slack", action_slack)],
                    action_slack,
                    1e-12,
                ),
                CheckReport::new(
                    "convolution_distance",
                    d,
                    &[("min_slack", distance_slack), ("scale", scale)],
                    distance_slack,
                    2e-3 * scale,
                ),
            ])
        })
    }

    /// `Σ (1 ∧ |x − y|)|ν| ≤ C √𝒜` on random pairs; every other trial uses a
    /// momentum aligned with the Cauchy–Schwarz equality case.
    pub fn integrability_check(&self, trials: usize, seed: u64) -> Result<CheckReport> {
        let space = self.kernel.space();
        let edges = self.kernel.edges();
        let c = integrability_constant(&self.kernel);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        timed_one(|| {
            let mut worst = f64::INFINITY;
            let mut ratio = 0.0f64;
            for trial in 0..trials {
                let rho = ProbabilityDensity::random(space, &mut rng, 1e-3);
                let r = rho.values();
                let values: Vec<f64> = edges
                    .pairs()
                    .iter()
                    .zip(edges.gamma())
                    .map(|(&(i, j), g)| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        if trial % 2 == 0 {
                            rng.random_range(-1.0..=1.0)
                        } else {
                            sign * space.distance(i, j).min(1.0) * self.mean.theta(r[i], r[j]) * g
                        }
                    })
                    .collect();
                let nu = MomentumField::new(edges, values)?;
                let lhs = truncated_flux_norm(&nu, edges, space);
                let rhs = c * action(r, &nu, edges, self.mean)?.sqrt();
                worst = worst.min((rhs - lhs) / rhs.max(f64::MIN_POSITIVE));
                if rhs > 0.0 {
                    ratio = ratio.max(lhs / rhs);
                }
            }
            let d = self.digest(json!({"trials": trials, "seed": seed}));
            Ok(CheckReport::new(
                "integrability_bound",
                d,
                &[("C", c), ("min_relative_slack", worst), ("max_ratio", ratio)],
                worst,
                1e-12,
            ))
        })
    }

    /// Coefficient of variation of the per-interval action at `coarse`
    /// intervals (asserted `≤ tol`) and its decrease at `fine` intervals.
    pub fn constant_speed_check(
        &self,
        label: &str,
        mu0: &ProbabilityDensity,
        mu1: &ProbabilityDensity,
        coarse: usize,
        fine: usize,
        tol: f64,
    ) -> Result<Vec<CheckReport>> {
        timed(|| {
            let a = self
                .with_config(self.config.clone().with_intervals(coarse))?
                .solve(mu0, mu1)?;
            let b = self
                .with_config(self.config.clone().with_intervals(fine))?
                .solve(mu0, mu1)?;
            let cv_a = constant_speed_deviation(&a);
            let cv_b = constant_speed_deviation(&b);
            let d = self.digest(json!({"mu0": mu0.values(), "mu1": mu1.values(), "coarse": coarse, "fine": fine}));
            Ok(vec![
                CheckReport::new(
                    format!("constant_speed_{label}_K{coarse}"),
                    d.clone(),
                    &[("cv", cv_a)],
                    -cv_a,
                    tol,
                ),
                CheckReport::new(
                    format!("constant_speed_{label}_refinement"),
                    d,
                    &[("cv_coarse", cv_a), ("cv_fine", cv_b)],
                    cv_a - cv_b,
                    0.0,
                ),
            ])
        })
    }

    /// `|𝒲_{T=2} − 𝒲_{T=1}| / 𝒲`.
    pub fn reparametrization_check(
        &self,
        label: &str,
        mu0: &ProbabilityDensity,
        mu1: &ProbabilityDensity,
        tol: f64,
    ) -> Result<CheckReport> {
        timed_one(|| {
            let one = self
                .with_config(self.config.clone().with_horizon(1.0))?
                .solve(mu0, mu1)?;
            let two = self
                .with_config(self.config.clone().with_horizon(2.0))?
                .solve(mu0, mu1)?;
            let path = two
                .path
                .as_ref()
                .ok_or_else(|| Error::Domain("solver returned no path".into()))?;
            // 𝒲² = T ∫ 𝒜 dt on the slower path as well
            let w_path = (path.horizon() * path_action(path, self.kernel.edges(), self.mean)?).sqrt();
            let gap = (two.w - one.w).abs() / one.w.max(f64::MIN_POSITIVE);
            let d = self.digest(json!({"mu0": mu0.values(), "mu1": mu1.values()}));
            Ok(CheckReport::new(
                format!("reparametrization_{label}"),
                d,
                &[
                    ("W_T1", one.w),
                    ("W_T2", two.w),
                    ("W_T2_from_path", w_path),
                    ("relative_gap", gap),
                ],
                -gap,
                tol,
            ))
        })
    }

    /// Energy identity with the dense backend, plus monotonicity of the
    /// entropy on a grid of 50 times.
    pub fn entropy_dissipation(
        &self,
        rho0: &ProbabilityDensity,
        s: f64,
        t: f64,
        panels: usize,
        tol: f64,
    ) -> Result<Vec<CheckReport>> {
        let dense = SemigroupBackend::dense(&self.kernel)?;
        let space = self.kernel.space();
        timed(|| {
            let (lhs, rhs) = entropy_dissipation_check(rho0, s, t, panels, &dense)?;
            let err = (lhs - rhs).abs();
            let mut increase = 0.0f64;
            let mut prev = entropy(rho0.values(), space);
            for i in 1..=50 {
                let r = evolve(rho0, t * i as f64 / 50.0, &dense)?;
                let h = entropy(r.values(), space);
                increase = increase.max(h - prev);
                prev = h;
            }
            let d = self.digest(json!({"rho0": rho0.values(), "s": s, "t": t, "panels": panels}));
            Ok(vec![
                CheckReport::new(
                    "entropy_dissipation_identity",
                    d.clone(),
                    &[("entropy_change", lhs), ("minus_dissipation", rhs), ("error", err)],
                    -err,
                    tol,
                ),
                CheckReport::new("entropy_monotone", d, &[("max_increase", increase)], -increase, 1e-12),
            ])
        })
    }

    /// Dense and spectral evolutions of `rho0` at each time.
    pub fn backend_agreement(&self, rho0: &ProbabilityDensity, times: &[f64], tol: f64) -> Result<Vec<CheckReport>> {
        let dense = SemigroupBackend::dense(&self.kernel)?;
        let spectral = SemigroupBackend::spectral(&self.kernel)?;
        let mut out = Vec::new();
        for &t in times {
            out.push(timed_one(|| {
                let a = evolve(rho0, t, &dense)?;
                let b = evolve(rho0, t, &spectral)?;
                let diff = a.sup_distance(&b);
                let d = self.digest(json!({"rho0": rho0.values(), "t": t}));
                Ok(CheckReport::new(
                    format!("backend_agreement_t{t}"),
                    d,
                    &[("max_abs_difference", diff)],
                    -diff,
                    tol,
                ))
            })?);
        }
        Ok(out)
    }
}

/// Solver value against the two-point quadrature oracle.
pub fn two_point_check(
    p0: f64,
    p1: f64,
    gamma: f64,
    mean: Mean,
    config: &SolverConfig,
    tol: f64,
) -> Result<CheckReport> {
    timed_one(|| {
        let space = StateSpace::general(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0])?;
        let kernel = JumpKernel::dense(&space, vec![vec![0.0, gamma], vec![gamma, 0.0]])?;
        let a = ProbabilityDensity::new(&space, vec![1.0 - p0, p0])?;
        let b = ProbabilityDensity::new(&space, vec![1.0 - p1, p1])?;
        let res = Harness::new(kernel, mean, config.clone())?.solve(&a, &b)?;
        let oracle = crate::geodesic::two_point_oracle(p0, p1, gamma, mean)?;
        let gap = (res.w - oracle).abs() / oracle;
        let d = digest(&json!({"p0": p0, "p1": p1, "gamma": gamma, "mean": mean.tag(), "config": config}));
        Ok(CheckReport::new(
            format!("two_point_{}", mean.tag()),
            d,
            &[("W", res.w), ("oracle", oracle), ("relative_gap", gap)],
            -gap,
            tol,
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_fractional;
    use crate::spaces::{delta_density, make_lattice, uniform_density};

    #[test]
    fn w1_examples() {
        let s = make_lattice(1, &[10], 0.1).unwrap();
        let a = delta_density(&s, 2).unwrap();
        assert_eq!(w1_distance_1d(&a, &a, &s).unwrap(), 0.0);
        for (j, d) in [(3, 1), (5, 3), (7, 5), (9, 3), (0, 2)] {
            let b = delta_density(&s, j).unwrap();
            let w = w1_distance_1d(&a, &b, &s).unwrap();
            assert!((w - 0.1 * d as f64).abs() < 1e-12, "{j}: {w}");
        }
        let two = make_lattice(2, &[3, 3], 1.0).unwrap();
        assert!(w1_distance_1d(&uniform_density(&two), &uniform_density(&two), &two).is_err());
    }

    #[test]
    fn report_pass_matches_slack() {
        let r = CheckReport::new("x", String::new(), &[], -0.5, 1.0);
        assert!(r.pass);
        let r = CheckReport::new("x", String::new(), &[], -1.5, 1.0);
        assert!(!r.pass && !r.ok());
        assert!(r.clone().negative_control().ok());
        let nan = CheckReport::new("x", String::new(), &[], f64::NAN, 1.0);
        assert!(!nan.pass);
        let line = r.to_json_line().unwrap();
        let back: CheckReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        let inf = CheckReport::new("y", String::new(), &[("w", f64::INFINITY)], f64::NEG_INFINITY, 0.0);
        let back: CheckReport = serde_json::from_str(&inf.to_json_line().unwrap()).unwrap();
        assert_eq!(back, inf);
    }

    #[test]
    fn uniform_evi_is_stationary() {
        let s = make_lattice(1, &[8], 0.125).unwrap();
        let k = build_fractional(&s, 1.0, 3, 1.0).unwrap();
        let h = Harness::new(k, Mean::Logarithmic, SolverConfig::default().with_intervals(8)).unwrap();
        let u = uniform_density(&s);
        let r = h.evi_check(&u, &u, 0.1, None, 5e-3).unwrap();
        assert_eq!(r.measured["D_half_dt"], 0.0);
        assert!(r.pass);
    }

    #[test]
    fn hypothesis_gate_on_dense_kernels() {
        let s = StateSpace::general(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 1.0, 1.0]).unwrap();
        let k = JumpKernel::dense(&s, vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 1.0], vec![0.5, 1.0, 0.0]]).unwrap();
        let h = Harness::new(k, Mean::Logarithmic, SolverConfig::default()).unwrap();
        let u = uniform_density(&s);
        assert!(matches!(
            h.evi_check(&u, &u, 0.1, None, 5e-3),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(h.entropy_convexity(&u, &u, 1e-3), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn summary_csv_columns() {
        let r = CheckReport::new("a", String::new(), &[], 0.0, 1.0);
        let mut buf = Vec::new();
        write_summary_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,pass,slack,tolerance,runtime_ms\n"));
    }
}
