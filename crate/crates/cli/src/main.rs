//! `jumpflow` command-line front end.
//!
//! Exit codes: 0 all asserted checks pass, 1 a check or invariant failed,
//! 2 the configuration is unusable, 3 a command's hypotheses are unmet.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumpflow::analysis::{mean_axiom_checks, run_suite, SuiteSettings, W1_SELF_TEST_FACTOR};
use jumpflow::geodesic::constant_speed_deviation;
use jumpflow::kernels::{check_reversibility, integrability_constant, second_moment, REVERSIBILITY_TOL};
use jumpflow::means::check_mean_properties;
use jumpflow::semigroup::{heat_kernel_positivity, structural_positivity};
use jumpflow::{ce_residual, evolve, solve_geodesic, CheckReport, Error, Harness, JumpKernel, ProbabilityDensity};
use jumpflow::{SemigroupBackend, StateSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use config::{BackendChoice, DensitySpec, RunConfig};
use output::{Header, Outputs};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

#[derive(Parser, Debug)]
#[command(
    name = "jumpflow",
    version,
    about = "Non-local transport distances from jump kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON). The shipped default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of time intervals `solver.K`.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Overrides the command's tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write `runtime_ms` as 0 so that reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check kernel and mean invariants.
    Validate,
    /// Mean axioms over seeded samples.
    MeansCheck,
    /// Solve for the distance and a discrete geodesic.
    Geodesic,
    /// Evolve a density under the jump semigroup.
    Evolve,
    /// Evolution variational inequality check.
    Evi,
    /// Geodesic convexity of the entropy.
    Convexity,
    /// Compare against W1 on a 1D lattice.
    CompareW1,
    /// The full acceptance battery.
    Suite,
}

impl Command {
    fn tag(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::MeansCheck => "means-check",
            Command::Geodesic => "geodesic",
            Command::Evolve => "evolve",
            Command::Evi => "evi",
            Command::Convexity => "convexity",
            Command::CompareW1 => "compare-w1",
            Command::Suite => "suite",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 1,
            Failure::Run(e) => match e {
                Error::Hypothesis(_) | Error::NotLattice => 3,
                Error::Space(_)
                | Error::Density(_)
                | Error::Kernel(_)
                | Error::Domain(_)
                | Error::Shape(_)
                | Error::Serde(_) => 2,
                _ => 1,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("config error: {m}"),
            Failure::Io(m) => format!("output error: {m}"),
            Failure::Run(e) => e.to_string(),
        }
    }
}

struct Context {
    command: Command,
    config: RunConfig,
    base: PathBuf,
    out: Outputs,
    no_timing: bool,
    tol: Option<f64>,
}

impl Context {
    fn space(&self) -> Result<StateSpace, Failure> {
        self.config.space.build().map_err(|e| Failure::Config(e.to_string()))
    }

    fn kernel(&self, space: &StateSpace) -> Result<JumpKernel, Failure> {
        self.config.kernel.build(space).map_err(|e| match e {
            Error::NotReversible { .. } | Error::AsymmetricWeights(_) => Failure::Run(e),
            other => Failure::Config(other.to_string()),
        })
    }

    /// Random specs without their own seed draw from `seed + salt`.
    fn density(&self, spec: &DensitySpec, space: &StateSpace, salt: u64) -> Result<ProbabilityDensity, Failure> {
        spec.build(space, self.config.seed.wrapping_add(salt), &self.base)
            .map_err(Failure::Config)
    }

    fn harness(&self, kernel: JumpKernel) -> Result<Harness, Failure> {
        Ok(Harness::new(kernel, self.config.mean, self.config.solver.clone())?)
    }

    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    /// Writes reports, prints one line per report, returns the exit code.
    fn finish_reports(&mut self, mut reports: Vec<CheckReport>) -> Result<u8, Failure> {
        if self.no_timing {
            for r in &mut reports {
                r.runtime_ms = 0.0;
            }
        }
        self.out.reports(self.command.tag(), &reports).map_err(Failure::Io)?;
        let mut failed = 0;
        for r in &reports {
            let verdict = match (r.asserted, r.pass) {
                (true, true) => "PASS",
                (true, false) => {
                    failed += 1;
                    "FAIL"
                }
                (false, true) => "pass (control)",
                (false, false) => "fail (control)",
            };
            println!(
                "{verdict:<14} {:<48} slack={:+.3e} tol={:.1e}",
                r.name, r.slack, r.tolerance
            );
        }
        println!("{} checks, {} asserted failures", reports.len(), failed);
        Ok(if failed == 0 { 0 } else { 1 })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("jumpflow {}: {}", cli.command.tag(), f.message());
            f.code()
        }
    };
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let (text, base) = match &cli.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, base)
        }
        None => (DEFAULT_CONFIG.to_string(), PathBuf::from(".")),
    };
    let mut config = RunConfig::from_json(&text).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(k) = cli.k {
        config.solver.intervals = k;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::Config(format!("--tol must be positive, got {tol}")));
        }
    }
    config.solver.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let effective = serde_json::to_string(&config).map_err(|e| Failure::Config(e.to_string()))?;
    let header = Header::new(cli.command.tag(), &effective, config.seed);
    let dir = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let out = Outputs::new(&dir, header).map_err(Failure::Io)?;
    let mut ctx = Context {
        command: cli.command,
        config,
        base,
        out,
        no_timing: cli.no_timing,
        tol: cli.tol,
    };
    match cli.command {
        Command::Validate => cmd_validate(&mut ctx),
        Command::MeansCheck => cmd_means_check(&mut ctx),
        Command::Geodesic => cmd_geodesic(&mut ctx),
        Command::Evolve => cmd_evolve(&mut ctx),
        Command::Evi => cmd_evi(&mut ctx),
        Command::Convexity => cmd_convexity(&mut ctx),
        Command::CompareW1 => cmd_compare_w1(&mut ctx),
        Command::Suite => cmd_suite(&mut ctx),
    }
}

fn print_json(ctx: &mut Context, name: &str, body: Value) -> Result<(), Failure> {
    ctx.out.json(name, body).map_err(Failure::Io)?;
    let path = ctx.out.written().last().cloned().unwrap_or_default();
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Io(e.to_string()))?;
    print!("{text}");
    Ok(())
}

fn invariant_name(e: &Error) -> &'static str {
    match e {
        Error::NotReversible { .. } => "reversibility",
        Error::AsymmetricWeights(_) => "symmetry",
        _ => "kernel",
    }
}

fn cmd_validate(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    let kernel = match ctx.kernel(&space) {
        Ok(k) => k,
        Err(Failure::Run(e)) => {
            let name = invariant_name(&e);
            eprintln!("jumpflow validate: invariant `{name}` failed: {e}");
            print_json(
                ctx,
                "validate.json",
                json!({"valid": false, "failed_invariants": [name], "message": e.to_string()}),
            )?;
            return Ok(1);
        }
        Err(other) => return Err(other),
    };
    let defect = check_reversibility(&kernel);
    let scale = kernel.rates().iter().flatten().fold(1.0f64, |a, &b| a.max(b.abs()));
    let m2 = second_moment(&kernel);
    let c = integrability_constant(&kernel);
    let numeric = heat_kernel_positivity(&kernel, 1.0)?;
    let structural = structural_positivity(&kernel);
    let mc = &ctx.config.means_check;
    let tol = ctx.tol(mc.tol);
    let mean_report = check_mean_properties(ctx.config.mean, mc.samples, ctx.config.seed);
    let mean_entries: serde_json::Map<String, Value> = mean_report
        .entries()
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();

    let mut failed = Vec::new();
    if defect > REVERSIBILITY_TOL * scale {
        failed.push("reversibility");
    }
    if !m2.is_finite() {
        failed.push("second_moment");
    }
    if numeric != structural {
        failed.push("positivity_consistency");
    }
    if !mean_report.passes(tol) {
        failed.push("mean_axioms");
    }
    for name in &failed {
        eprintln!("jumpflow validate: invariant `{name}` failed");
    }
    let body = json!({
        "valid": failed.is_empty(),
        "failed_invariants": failed,
        "states": space.len(),
        "edges": kernel.edges().len(),
        "translation_invariant": kernel.is_translation_invariant(),
        "reversibility_defect": defect,
        "M2": m2,
        "C": c,
        "positivity": {"numeric_t1": numeric, "structural": structural},
        "mean": {"tag": ctx.config.mean.tag(), "tol": tol, "worst": mean_report.worst(), "violations": mean_entries},
    });
    let code = if failed.is_empty() { 0 } else { 1 };
    print_json(ctx, "validate.json", body)?;
    Ok(code)
}

fn cmd_means_check(ctx: &mut Context) -> Result<u8, Failure> {
    let mc = ctx.config.means_check.clone();
    let reports = mean_axiom_checks(&mc.means, mc.samples, ctx.config.seed, ctx.tol(mc.tol));
    ctx.finish_reports(reports)
}

fn finite_or_infinite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("infinite")
    }
}

fn cmd_geodesic(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    let kernel = ctx.kernel(&space)?;
    let mu0 = ctx.density(&ctx.config.geodesic.mu0, &space, 1)?;
    let mu1 = ctx.density(&ctx.config.geodesic.mu1, &space, 2)?;
    let mut solver = ctx.config.solver.clone();
    if let Some(tol) = ctx.tol {
        solver.tol_res = tol;
    }
    let res = solve_geodesic(&mu0, &mu1, &kernel, ctx.config.mean, &solver)?;
    let residual = res.path.as_ref().map(|p| ce_residual(p, &space, kernel.edges()));
    let ok = res.converged && res.w.is_finite();
    let body = json!({
        "W": finite_or_infinite(res.w),
        "converged": res.converged,
        "iterations": res.iterations,
        "newton_iterations": res.newton_iterations,
        "per_interval_action": res.per_interval_action,
        "constant_speed_deviation": constant_speed_deviation(&res),
        "ce_residual": residual,
        "residuals": res.residuals,
        "ladder": res.ladder,
        "note": res.note,
        "K": solver.intervals,
        "mean": ctx.config.mean.tag(),
    });
    if let Some(path) = &res.path {
        let edges = kernel.edges();
        ctx.out
            .csv("geodesic_density.csv", |b| {
                path.write_density_csv(b).map_err(|e| e.to_string())
            })
            .map_err(Failure::Io)?;
        ctx.out
            .csv("geodesic_momentum.csv", |b| {
                path.write_momentum_csv(edges, b).map_err(|e| e.to_string())
            })
            .map_err(Failure::Io)?;
    }
    print_json(ctx, "geodesic.json", body)?;
    if !ok {
        eprintln!(
            "jumpflow geodesic: {}",
            res.note.as_deref().unwrap_or("solver did not reach its tolerances")
        );
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_evolve(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    let kernel = ctx.kernel(&space)?;
    let params = ctx.config.evolve.clone();
    let rho0 = ctx.density(&params.rho0, &space, 5)?;
    if !(params.t >= 0.0 && params.t.is_finite()) {
        return Err(Failure::Config(format!(
            "evolve.t must be finite and nonnegative, got {}",
            params.t
        )));
    }
    let backend = match params.backend {
        BackendChoice::Auto => SemigroupBackend::auto(&kernel)?,
        BackendChoice::Dense => SemigroupBackend::dense(&kernel)?,
        BackendChoice::Spectral => SemigroupBackend::spectral(&kernel)?,
    };
    let rho = evolve(&rho0, params.t, &backend)?;
    ctx.out
        .csv("evolve_density.csv", |b| {
            b.extend_from_slice(b"state,value\n");
            for (i, v) in rho.values().iter().enumerate() {
                b.extend_from_slice(format!("{i},{v:e}\n").as_bytes());
            }
            Ok(())
        })
        .map_err(Failure::Io)?;
    if backend.symbol().is_some() {
        ctx.out
            .csv("evolve_symbol.csv", |b| {
                backend.write_symbol_csv(b).map_err(|e| e.to_string())
            })
            .map_err(Failure::Io)?;
    }
    let body = json!({
        "t": params.t,
        "backend": backend.name(),
        "mass": rho.mass(&space),
        "min": rho.min(),
        "entropy_initial": jumpflow::entropy(rho0.values(), &space),
        "entropy_final": jumpflow::entropy(rho.values(), &space),
    });
    print_json(ctx, "evolve.json", body)?;
    Ok(0)
}

fn cmd_evi(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    let kernel = ctx.kernel(&space)?;
    let p = ctx.config.evi.clone();
    let mu = ctx.density(&p.mu, &space, 3)?;
    let sigma = ctx.density(&p.sigma, &space, 4)?;
    let harness = ctx.harness(kernel)?;
    let report = harness.evi_check(&mu, &sigma, p.t, p.dt, ctx.tol(p.tol))?;
    ctx.finish_reports(vec![report])
}

fn cmd_convexity(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    let kernel = ctx.kernel(&space)?;
    let p = ctx.config.convexity.clone();
    let mu0 = ctx.density(&p.mu0, &space, 1)?;
    let mu1 = ctx.density(&p.mu1, &space, 2)?;
    let harness = ctx.harness(kernel)?;
    let report = harness.entropy_convexity(&mu0, &mu1, ctx.tol(p.tol))?;
    ctx.finish_reports(vec![report])
}

fn cmd_compare_w1(ctx: &mut Context) -> Result<u8, Failure> {
    let space = ctx.space()?;
    match space.lattice() {
        Some((extents, _)) if extents.len() == 1 => {}
        _ => return Err(Error::Hypothesis("compare-w1 needs a one-dimensional lattice".into()).into()),
    }
    let kernel = ctx.kernel(&space)?;
    let p = ctx.config.compare_w1.clone();
    if !(p.floor > 0.0 && p.floor <= 1.0) {
        return Err(Failure::Config(format!(
            "compare_w1.floor must lie in (0, 1], got {}",
            p.floor
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let pairs: Vec<_> = (0..p.pairs)
        .map(|_| {
            let a = ProbabilityDensity::random(&space, &mut rng, p.floor);
            let b = ProbabilityDensity::random(&space, &mut rng, p.floor);
            (a, b)
        })
        .collect();
    let harness = ctx.harness(kernel)?;
    let tol = ctx.tol(p.tol);
    let claim = harness.w1_bound_check(&pairs, tol, 1.0)?;
    let control = harness
        .w1_bound_check(&pairs, tol, W1_SELF_TEST_FACTOR)?
        .negative_control();
    ctx.finish_reports(vec![claim, control])
}

fn cmd_suite(ctx: &mut Context) -> Result<u8, Failure> {
    let settings = SuiteSettings {
        seed: ctx.config.seed,
        solver: ctx.config.solver.clone(),
        criteria: ctx.config.suite.criteria.clone(),
    };
    let reports = run_suite(&settings)?;
    ctx.finish_reports(reports)
}
