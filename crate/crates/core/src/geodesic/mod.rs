//! Geodesics and distances for the non-local transport metric.
//!
//! The time-discrete problem minimizes `Σ_k Δt 𝒜(ρ̄ᵏ, νᵏ)` over paths that
//! solve the discrete continuity equation between fixed endpoints. The
//! default method runs a preconditioned primal-dual iteration with per-cell
//! proximal maps, then finishes with Newton steps on the density-only
//! reduced objective. An accelerated projected gradient method on the same
//! reduced objective is available as an independent reference.

mod newton;
mod oracle;
mod pdhg;
mod potential;
mod problem;
mod prox;
mod reference;

use serde::{Deserialize, Serialize};

pub use oracle::{two_point_oracle, ORACLE_TOL};
pub use potential::recover_potential;

use crate::action::MomentumField;
use crate::dynamics::{ce_residual, path_action, Path};
use crate::error::{Error, Result};
use crate::kernels::JumpKernel;
use crate::means::Mean;
use crate::numeric::solve_laplacian;
use crate::spaces::{uniform_density, ProbabilityDensity};
use newton::newton;
use pdhg::{Pdhg, PdhgSettings};
use problem::Problem;
use reference::accelerated_gradient;

/// Relative Newton decrement at which the reduced problem counts as solved.
const NEWTON_TOL: f64 = 1e-14;
/// Component masses of the endpoints must agree to this level.
const MASS_TOL: f64 = 1e-10;
/// Iterations over which the objective stall is measured.
const STALL_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    PrimalDual,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Number of time intervals `K`.
    #[serde(rename = "K")]
    pub intervals: usize,
    pub max_iter: usize,
    pub tol_res: f64,
    pub tol_gap: f64,
    pub delta_ladder: Vec<f64>,
    /// Step product is `step_safety / ‖Σ^{1/2} A T^{1/2}‖²`.
    pub step_safety: f64,
    pub power_iterations: usize,
    pub seed: u64,
    pub horizon: f64,
    pub method: Method,
    /// Finish with Newton steps on the reduced problem.
    pub polish: bool,
    /// Primal-dual residual at which control passes to Newton.
    pub handoff: f64,
    pub newton_max_iter: usize,
    /// Density floor of the reference method.
    pub reference_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            intervals: 32,
            max_iter: 50_000,
            tol_res: 1e-7,
            tol_gap: 1e-9,
            delta_ladder: vec![1e-2, 1e-3, 1e-4],
            step_safety: 0.99,
            power_iterations: 50,
            seed: 0,
            horizon: 1.0,
            method: Method::PrimalDual,
            polish: true,
            handoff: 1e-3,
            newton_max_iter: 100,
            reference_floor: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn with_intervals(mut self, k: usize) -> Self {
        self.intervals = k;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("solver config: {what}")));
        if self.intervals < 1 {
            return bad("K must be at least 1");
        }
        for (name, v) in [
            ("tol_res", self.tol_res),
            ("tol_gap", self.tol_gap),
            ("horizon", self.horizon),
            ("reference_floor", self.reference_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return bad("step_safety must lie in (0, 1)");
        }
        if !(self.handoff >= 0.0) {
            return bad("handoff must be nonnegative");
        }
        if self.delta_ladder.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad("delta values must lie in (0, 1)");
        }
        if self.delta_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("delta values must be strictly decreasing");
        }
        if self.max_iter == 0 || self.power_iterations == 0 {
            return bad("iteration counts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Sup norm of the continuity-equation defect of the returned path.
    pub continuity: f64,
    pub primal: f64,
    pub dual: f64,
    /// Sup norm of the projected reduced gradient after the final stage.
    pub gradient: f64,
    pub cell_kkt: f64,
    /// Largest primal objective increase seen by the primal-dual stage.
    pub objective_increase: f64,
    pub operator_norm: f64,
    pub prox_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLadder {
    pub deltas: Vec<f64>,
    pub distances: Vec<f64>,
    /// Linear extrapolation of the last two rungs to `δ = 0`.
    pub extrapolated: f64,
    pub monotone: bool,
    /// Set when the sequence is not monotone or its increments do not shrink.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResult {
    #[serde(skip)]
    pub path: Option<Path>,
    #[serde(rename = "W")]
    pub w: f64,
    pub per_interval_action: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub residuals: Residuals,
    pub ladder: Option<DeltaLadder>,
    pub note: Option<String>,
}

impl GeodesicResult {
    fn trivial(path: Path) -> Self {
        GeodesicResult {
            per_interval_action: vec![0.0; path.intervals()],
            path: Some(path),
            w: 0.0,
            converged: true,
            iterations: 0,
            newton_iterations: 0,
            residuals: Residuals::default(),
            ladder: None,
            note: None,
        }
    }
}

/// Computes `𝒲(μ₀, μ₁)` and a discrete geodesic.
pub fn solve_geodesic(
    mu0: &ProbabilityDensity,
    mu1: &ProbabilityDensity,
    kernel: &JumpKernel,
    mean: Mean,
    config: &SolverConfig,
) -> Result<GeodesicResult> {
    config.validate()?;
    let space = kernel.space();
    mu0.validate(space)?;
    mu1.validate(space)?;
    let edges = kernel.edges();
    let problem = make_problem(kernel, mean, config, mu0.values(), mu1.values());
    if problem.mass_gap() > MASS_TOL {
        return Ok(GeodesicResult {
            path: None,
            w: f64::INFINITY,
            per_interval_action: Vec::new(),
            converged: false,
            iterations: 0,
            newton_iterations: 0,
            residuals: Residuals::default(),
            ladder: None,
            note: Some(format!(
                "endpoint masses differ by {:e} on a connected component of the positive-rate graph",
                problem.mass_gap()
            )),
        });
    }
    if mu0 == mu1 {
        let path = Path::constant(mu0.values(), edges, config.intervals, config.horizon)?;
        return Ok(GeodesicResult::trivial(path));
    }
    if mu0.min() > 0.0 && mu1.min() > 0.0 {
        return solve_positive(&problem, kernel, config);
    }
    let uniform = uniform_density(space);
    let mut distances = Vec::new();
    let mut last = None;
    let mut all_converged = true;
    let mut iterations = 0;
    let mut newton_iterations = 0;
    for &delta in &config.delta_ladder {
        let a = mu0.mix(&uniform, delta);
        let b = mu1.mix(&uniform, delta);
        let sub = make_problem(kernel, mean, config, a.values(), b.values());
        let res = solve_positive(&sub, kernel, config)?;
        distances.push(res.w);
        all_converged &= res.converged;
        iterations += res.iterations;
        newton_iterations += res.newton_iterations;
        last = Some(res);
    }
    let mut res =
        last.ok_or_else(|| Error::Domain("endpoints have zero entries and the delta ladder is empty".into()))?;
    let ladder = ladder_summary(&config.delta_ladder, &distances);
    res.w = ladder.extrapolated;
    res.converged = all_converged;
    res.iterations = iterations;
    res.newton_iterations = newton_iterations;
    res.note = Some(if ladder.flagged {
        "endpoints with zero entries: delta ladder did not settle; extrapolated value is unreliable".into()
    } else {
        "endpoints with zero entries: value extrapolated from the delta ladder".into()
    });
    res.ladder = Some(ladder);
    Ok(res)
}

/// `𝒲(μ₀, μ₁)`; `+∞` when the endpoints cannot be connected.
pub fn distance(
    mu0: &ProbabilityDensity,
    mu1: &ProbabilityDensity,
    kernel: &JumpKernel,
    mean: Mean,
    config: &SolverConfig,
) -> Result<f64> {
    Ok(solve_geodesic(mu0, mu1, kernel, mean, config)?.w)
}

/// Coefficient of variation of the per-interval action; `0` for paths at rest.
pub fn constant_speed_deviation(result: &GeodesicResult) -> f64 {
    let a = &result.per_interval_action;
    if a.is_empty() {
        return 0.0;
    }
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
    var.sqrt() / mean
}

fn ladder_summary(deltas: &[f64], distances: &[f64]) -> DeltaLadder {
    let l = distances.len();
    let extrapolated = if l >= 2 {
        let (d0, d1) = (deltas[l - 2], deltas[l - 1]);
        let (w0, w1) = (distances[l - 2], distances[l - 1]);
        w1 - d1 * (w0 - w1) / (d0 - d1)
    } else {
        distances[0]
    };
    let inc: Vec<f64> = distances.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = inc.iter().all(|d| *d >= 0.0) || inc.iter().all(|d| *d <= 0.0);
    let shrinking = inc.windows(2).all(|w| w[1].abs() <= w[0].abs());
    DeltaLadder {
        deltas: deltas.to_vec(),
        distances: distances.to_vec(),
        extrapolated,
        monotone,
        flagged: !monotone || !shrinking || !extrapolated.is_finite(),
    }
}

fn make_problem(kernel: &JumpKernel, mean: Mean, config: &SolverConfig, rho0: &[f64], rho1: &[f64]) -> Problem {
    let edges = kernel.edges();
    Problem::new(
        edges.pairs().to_vec(),
        edges.gamma().to_vec(),
        kernel.space().weights().to_vec(),
        edges.components(),
        mean,
        config.intervals,
        config.horizon,
        rho0.to_vec(),
        rho1.to_vec(),
    )
}

fn solve_positive(problem: &Problem, kernel: &JumpKernel, config: &SolverConfig) -> Result<GeodesicResult> {
    let k = problem.intervals;
    let n = problem.n;
    let mut nodes = problem.linear_path();
    let mut residuals = Residuals::default();
    let iterations;
    let mut newton_iterations = 0;
    let converged;
    let mut momenta: Option<Vec<Vec<f64>>> = None;
    match config.method {
        Method::PrimalDual => {
            let solver = Pdhg::new(problem)?;
            let mut rho: Vec<f64> = nodes[1..k].iter().flatten().copied().collect();
            let mut nu = Vec::new();
            let settings = PdhgSettings {
                max_iter: config.max_iter,
                tol_res: config.tol_res,
                tol_gap: config.tol_gap,
                stall_window: STALL_WINDOW,
                step_safety: config.step_safety,
                power_iterations: config.power_iterations,
                seed: config.seed,
                cell_tol: 1e-10,
                handoff: if config.polish { config.handoff } else { 0.0 },
            };
            let report = solver.run(&mut rho, &mut nu, &settings);
            iterations = report.iterations;
            residuals.primal = report.primal_residual;
            residuals.dual = report.dual_residual;
            residuals.cell_kkt = report.max_cell_kkt;
            residuals.objective_increase = report.max_increase;
            residuals.operator_norm = report.operator_norm;
            residuals.prox_fallbacks = report.fallbacks;
            for step in 1..k {
                nodes[step].copy_from_slice(&rho[(step - 1) * n..step * n]);
            }
            let cp_momenta: Vec<Vec<f64>> = nu.chunks(problem.pairs.len().max(1)).map(|c| c.to_vec()).collect();
            let cp_momenta = if problem.pairs.is_empty() {
                vec![Vec::new(); k]
            } else {
                cp_momenta
            };
            let (pos_nodes, pos_momenta) = positivize(problem, &nodes, &cp_momenta)?;
            nodes = pos_nodes;
            if config.polish {
                let rep = newton(problem, &mut nodes, config.newton_max_iter, NEWTON_TOL)?;
                newton_iterations = rep.iterations;
                residuals.gradient = rep.gradient;
                converged = rep.converged;
            } else {
                converged = report.converged;
                momenta = Some(pos_momenta);
            }
        }
        Method::Reference => {
            let rep = accelerated_gradient(
                problem,
                &mut nodes,
                config.reference_floor,
                config.max_iter,
                config.tol_gap,
                STALL_WINDOW,
            )?;
            iterations = rep.iterations;
            converged = rep.converged;
            if config.polish {
                let rep = newton(problem, &mut nodes, config.newton_max_iter, NEWTON_TOL)?;
                newton_iterations = rep.iterations;
                residuals.gradient = rep.gradient;
            }
        }
    }
    let edges = kernel.edges();
    let fields = match momenta {
        Some(raw) => correct_momenta(problem, &nodes, &raw)?,
        None => optimal_momenta(problem, &nodes)?,
    };
    let fields = fields
        .into_iter()
        .map(|v| MomentumField::new(edges, v))
        .collect::<Result<Vec<_>>>()?;
    let path = Path::new(problem.horizon(), nodes, fields)?;
    let total = path_action(&path, edges, problem.mean)?;
    let per_interval_action = path.interval_actions(edges, problem.mean)?;
    residuals.continuity = ce_residual(&path, kernel.space(), edges);
    Ok(GeodesicResult {
        path: Some(path),
        w: (problem.horizon() * total).sqrt(),
        per_interval_action,
        converged,
        iterations,
        newton_iterations,
        residuals,
        ladder: None,
        note: None,
    })
}

/// Minimal-action momenta for fixed densities.
fn optimal_momenta(problem: &Problem, nodes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    (1..=problem.intervals)
        .map(|step| {
            problem
                .interval(&nodes[step - 1], &nodes[step], false)?
                .map(|ev| ev.momentum)
                .ok_or_else(|| Error::Domain("vanishing midpoint density".into()))
        })
        .collect()
}

/// Least-squares correction in the `θγ`-weighted norm that restores the
/// continuity equation exactly.
fn correct_momenta(problem: &Problem, nodes: &[Vec<f64>], raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = problem.n;
    let mut out = Vec::with_capacity(raw.len());
    for step in 1..=problem.intervals {
        let (prev, next) = (&nodes[step - 1], &nodes[step]);
        let mut nu = raw[step - 1].clone();
        let weights: Vec<f64> = problem
            .pairs
            .iter()
            .zip(&problem.gamma)
            .map(|(&(i, j), g)| g * problem.mean.theta(0.5 * (prev[i] + next[i]), 0.5 * (prev[j] + next[j])))
            .collect();
        let mut r: Vec<f64> = (0..n)
            .map(|i| (prev[i] - next[i]) * problem.m[i] / problem.dt)
            .collect();
        for (&(i, j), v) in problem.pairs.iter().zip(&nu) {
            r[i] -= v;
            r[j] += v;
        }
        let phi = solve_laplacian(n, &problem.pairs, &weights, &r, &problem.m)?;
        for ((v, &(i, j)), w) in nu.iter_mut().zip(&problem.pairs).zip(&weights) {
            *v += w * (phi[i] - phi[j]);
        }
        out.push(nu);
    }
    Ok(out)
}

/// Mixes a continuity-equation solution with the straight line (and its
/// minimal momenta) just enough to make every density positive. Both are
/// solutions with the same endpoints, so the mixture is one too.
fn positivize(problem: &Problem, nodes: &[Vec<f64>], momenta: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    const MARGIN: f64 = 1e-6;
    let line = problem.linear_path();
    let mut eps: f64 = 0.0;
    for (node, lin) in nodes.iter().zip(&line) {
        for (x, l) in node.iter().zip(lin) {
            if *x < MARGIN * l {
                eps = eps.max((MARGIN * l - x) / (l - x));
            }
        }
    }
    if eps == 0.0 {
        return Ok((nodes.to_vec(), momenta.to_vec()));
    }
    let eps = eps.min(1.0);
    let line_momenta = optimal_momenta(problem, &line)?;
    let mix = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (1.0 - eps) * p + eps * q).collect())
            .collect()
    };
    Ok((mix(nodes, &line), mix(momenta, &line_momenta)))
}

/// Pairwise distances (symmetric, zero diagonal).
pub fn distance_matrix(
    densities: &[ProbabilityDensity],
    kernel: &JumpKernel,
    mean: Mean,
    config: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = densities.len();
    let mut out = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let w = distance(&densities[a], &densities[b], kernel, mean, config)?;
            out[a][b] = w;
            out[b][a] = w;
        }
    }
    Ok(out)
}
