//! `spurmin`: dataset generation, sweeps, constructions, certification,
//! condition checks and the closed-form quadratic-loss reports.
//!
//! Exit codes: 0 when every asserted claim holds, 2 on a claim violation,
//! 1 on configuration or runtime errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spurmin_core::activations::Activation;
use spurmin_core::conditions::{
    check_necessary_condition, check_quadratic_condition, NecessaryVerdict, QuadraticVerdict,
};
use spurmin_core::constructions::{
    build_bump_minimum, build_feedforward_inactive, build_identity_shortcut, build_leaky_linear, build_relu_inactive,
    build_symmetric_zero, Claim, Construction, ConstructionKind,
};
use spurmin_core::datagen::{gen_named, gen_separable, gen_subspace, Dataset, SubspaceSpec};
use spurmin_core::landscape::{sweep_experiment, write_run_table, Certificate, Scenario, SweepConfig, Verdict};
use spurmin_core::losses::Loss;
use spurmin_core::numerics::rng;
use spurmin_core::population::{monte_carlo_rate, point_interval_report, quadloss_report, PointIntervalLaw, QuadlossExample};

/// Gradient tolerance for a construction that only claims a critical point.
const CRITICAL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "spurmin", version, about = "Loss-surface experiments for shortcut networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as CSV (plus a provenance sidecar).
    Gen(GenArgs),
    /// Train from many restarts and certify every endpoint.
    Sweep(SweepArgs),
    /// Build an explicit spurious minimum for a dataset.
    Construct(ConstructArgs),
    /// Re-certify a saved construction.
    Certify(CertifyArgs),
    /// Decide the quadratic-neuron dataset conditions.
    CheckCondition(CheckArgs),
    /// Population least-squares fit on the point/interval law.
    LeastSquares(LeastSquaresArgs),
    /// Exact quadratic-loss minimisers on the balanced example datasets.
    Quadloss(QuadlossArgs),
}

#[derive(Args)]
struct SeedArg {
    /// RNG seed; falls back to SPURMIN_SEED.
    #[arg(long, env = "SPURMIN_SEED")]
    seed: Option<u64>,
}

impl SeedArg {
    fn require(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::Config("a seed is required: pass --seed or set SPURMIN_SEED".into()))
    }
}

#[derive(Args)]
struct GenArgs {
    /// Named distribution (optionally with `_balanced`), `subspace` or `separable`.
    #[arg(long)]
    generator: String,
    #[arg(long)]
    n: usize,
    /// Input dimension for `subspace` and `separable`.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated basis indices spanning the positive class (`subspace`).
    #[arg(long, value_delimiter = ',')]
    plus: Vec<usize>,
    /// Comma-separated basis indices spanning the negative class (`subspace`).
    #[arg(long, value_delimiter = ',')]
    minus: Vec<usize>,
    /// Margin for `separable`.
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct ModelArgs {
    /// Activation kind, e.g. softplus, relu, leaky_relu, tanh, quadratic.
    #[arg(long)]
    activation: Option<String>,
    /// Slope parameter for leaky_relu and elu.
    #[arg(long)]
    alpha: Option<f64>,
    /// Loss kind: poly_hinge, quadratic or logistic.
    #[arg(long)]
    loss: Option<String>,
    /// Exponent for poly_hinge.
    #[arg(long)]
    p: Option<u32>,
}

impl ModelArgs {
    fn activation(&self) -> Result<Option<Activation>, Failure> {
        self.activation.as_deref().map(|k| Activation::parse(k, self.alpha)).transpose().map_err(Failure::from)
    }

    fn loss(&self) -> Result<Option<Loss>, Failure> {
        self.loss.as_deref().map(|k| Loss::parse(k, self.p)).transpose().map_err(Failure::from)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// subspace, subspace_quadratic, separable or relu_cross.
    #[arg(long)]
    scenario: Option<String>,
    /// JSON config; missing flags keep its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    perturbations: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for config.json, runs.csv and summary.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct ConstructArgs {
    /// relu_inactive, leaky_linear, symmetric_zero, feedforward_inactive,
    /// identity_shortcut or bump_minimum.
    #[arg(long)]
    kind: String,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Number of neurons.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Comma-separated hidden widths for the deep constructions.
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    /// Construction JSON written by `construct`.
    #[arg(long)]
    construction: PathBuf,
    /// Dataset CSV the construction was built for.
    #[arg(long)]
    data: PathBuf,
    /// Number of random perturbations.
    #[arg(long, default_value_t = 2000)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LeastSquaresArgs {
    /// Move the positive atom so the classes become separable.
    #[arg(long)]
    shifted: bool,
    /// Monte Carlo samples for an empirical rate (0 disables).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct QuadlossArgs {
    /// subspace, linsep or all.
    #[arg(long, default_value = "all")]
    example: String,
    /// Also report the label-flipped datasets.
    #[arg(long)]
    flipped: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Violation(String),
}

impl From<spurmin_core::Error> for Failure {
    fn from(e: spurmin_core::Error) -> Self {
        match e {
            spurmin_core::Error::Identity(m) => Failure::Violation(format!("identity check failed: {m}")),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Outcome {
    let seed = a.seed.require()?;
    let mut r = rng(seed, 0);
    let ds = match a.generator.as_str() {
        "subspace" => {
            let d = a.d.ok_or_else(|| Failure::Config("subspace needs --d".into()))?;
            let spec = SubspaceSpec::identity(d, a.plus.clone(), a.minus.clone());
            gen_subspace(&spec, a.n, &mut r, Some(seed))?
        }
        "separable" => {
            let d = a.d.ok_or_else(|| Failure::Config("separable needs --d".into()))?;
            gen_separable(d, a.n, a.margin, &mut r, Some(seed))?.dataset
        }
        name => gen_named(name, a.n, &mut r, Some(seed))?,
    };
    ds.write_csv(&a.out)?;
    println!("wrote {} samples ({} positive, {} negative) to {}", ds.n(), ds.n_pos(), ds.n_neg(), a.out.display());
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig, Failure> {
    let mut c = match (&a.config, &a.scenario) {
        (Some(path), _) => serde_json::from_str::<SweepConfig>(&fs::read_to_string(path)?)?,
        (None, Some(s)) => SweepConfig::default_for(Scenario::parse(s)?),
        (None, None) => return Err(Failure::Config("pass --scenario or --config".into())),
    };
    if let (Some(_), Some(s)) = (&a.config, &a.scenario) {
        if Scenario::parse(s)? != c.scenario {
            return Err(Failure::Config(format!("--scenario {s} disagrees with the config file")));
        }
    }
    if let Some(v) = a.n {
        c.n = v;
    }
    if a.m.is_some() {
        c.m = a.m;
    }
    if let Some(v) = a.restarts {
        c.train.restarts = v;
    }
    if let Some(v) = a.max_iters {
        c.train.max_iters = v;
    }
    if let Some(v) = a.grad_tol {
        c.train.grad_tol = v;
    }
    if let Some(v) = a.perturbations {
        c.perturbations = v;
    }
    if let Some(v) = a.radius {
        c.radius = v;
    }
    if let Some(v) = a.model.activation()? {
        c.activation = v;
    }
    if let Some(v) = a.model.loss()? {
        c.loss = v;
    }
    Ok(c)
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let config = sweep_config(a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let seed = a.seed.require()?;
    let result = sweep_experiment(&config, seed)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("config.json"), &config)?;
        write_run_table(&dir.join("runs.csv"), &result.rows)?;
        write_json(&dir.join("summary.json"), &result.summary)?;
    }
    let s = &result.summary;
    println!("scenario: {}", config.scenario.name());
    println!("width: {}", s.width);
    println!("runs: {}", s.runs);
    println!("converged: {}", s.converged);
    println!("certified: {}", s.certified);
    println!("certified_with_error: {}", s.certified_with_error);
    println!("saddles: {}", s.saddles);
    println!("inconclusive: {}", s.inconclusive);
    println!("violations: {}", s.violations);
    if s.violations > 0 {
        return Err(Failure::Violation(format!("{} certified minima with nonzero training error", s.violations)));
    }
    Ok(())
}

/// Bump constructions need a dual certificate; try the quadratic one first,
/// then the mean-constrained one, and keep the first that the builder accepts.
fn build_bump(ds: &Dataset, m: usize, act: Activation, loss: &Loss) -> Result<Construction, Failure> {
    let mut last = Failure::Config("the dataset satisfies both conditions, so no dual certificate exists".into());
    if let QuadraticVerdict::No { certificate } = check_quadratic_condition(ds)? {
        match build_bump_minimum(ds, &certificate, m, act, loss) {
            Ok(c) => return Ok(c),
            Err(e) => last = e.into(),
        }
    }
    if let NecessaryVerdict::Fails { certificate } = check_necessary_condition(ds)? {
        match build_bump_minimum(ds, &certificate, m, act, loss) {
            Ok(c) => return Ok(c),
            Err(e) => last = e.into(),
        }
    }
    Err(last)
}

fn cmd_construct(a: &ConstructArgs) -> Outcome {
    let ds = Dataset::read_csv(&a.data)?;
    let kind = ConstructionKind::parse(&a.kind)?;
    let loss = a.model.loss()?.unwrap_or(Loss::PolyHinge { p: 2, z0: 1.0 });
    let act = a.model.activation()?;
    let default_act = match kind {
        ConstructionKind::ReluInactive | ConstructionKind::FeedforwardInactive | ConstructionKind::IdentityShortcut => {
            Activation::Relu
        }
        ConstructionKind::LeakyLinear => Activation::LeakyRelu { alpha: 0.1 },
        ConstructionKind::SymmetricZero => Activation::Tanh,
        ConstructionKind::BumpMinimum => Activation::Softplus,
    };
    let act = act.unwrap_or(default_act);
    let hidden = if a.hidden.is_empty() { vec![a.m] } else { a.hidden.clone() };
    let c = match kind {
        ConstructionKind::ReluInactive => build_relu_inactive(&ds, a.m, act, &loss)?,
        ConstructionKind::LeakyLinear => build_leaky_linear(&ds, a.m, act, &loss)?,
        ConstructionKind::SymmetricZero => build_symmetric_zero(&ds, a.m, act, &loss)?,
        ConstructionKind::FeedforwardInactive => build_feedforward_inactive(&ds, &hidden, act, &loss)?,
        ConstructionKind::IdentityShortcut => build_identity_shortcut(&ds, &hidden, act, &loss)?,
        ConstructionKind::BumpMinimum => build_bump(&ds, a.m, act, &loss)?,
    };
    c.save(&a.out)?;
    println!("kind: {}", c.kind.name());
    println!("claim: {}", claim_name(c.claim));
    println!("claimed_error_lower_bound: {}", c.claimed_error_lower_bound);
    println!("proven_radius: {:?}", c.proven_radius);
    println!("parameters: {}", c.net.n_params());
    Ok(())
}

fn claim_name(c: Claim) -> &'static str {
    match c {
        Claim::LocalMinimum => "local_minimum",
        Claim::CriticalPoint => "critical_point",
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::CertifiedMinCandidate => "certified_min_candidate",
        Verdict::Saddle => "saddle",
        Verdict::Inconclusive => "inconclusive",
    }
}

#[derive(Serialize)]
struct CertifyReport<'a> {
    kind: ConstructionKind,
    claim: Claim,
    claimed_error_lower_bound: String,
    holds: bool,
    certificate: &'a Certificate,
}

fn cmd_certify(a: &CertifyArgs) -> Outcome {
    let seed = a.seed.require()?;
    let c = Construction::load(&a.construction)?;
    let ds = Dataset::read_csv(&a.data)?;
    let cert = c.certify(&ds, a.k, &mut rng(seed, 0))?;
    let bound_ok = cert.training_error >= c.claimed_error_lower_bound;
    let shape_ok = match c.claim {
        Claim::LocalMinimum => cert.verdict == Verdict::CertifiedMinCandidate,
        Claim::CriticalPoint => cert.grad_norm <= CRITICAL_TOL,
    };
    let holds = bound_ok && shape_ok;
    let b = c.claimed_error_lower_bound;
    let report = CertifyReport {
        kind: c.kind,
        claim: c.claim,
        claimed_error_lower_bound: b.to_string(),
        holds,
        certificate: &cert,
    };
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    println!("verdict: {}", verdict_name(cert.verdict));
    println!("grad_norm: {:e}", cert.grad_norm);
    println!("hess_min_eig: {:e}", cert.hess_min_eig);
    println!("worst_loss_delta: {:e}", cert.worst_loss_delta);
    println!("training_error: {} (claimed >= {})", cert.training_error, b);
    if !holds {
        return Err(Failure::Violation(format!("{} claim does not hold", claim_name(c.claim))));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConditionReport {
    quadratic: QuadraticVerdict,
    necessary: NecessaryVerdict,
}

fn cmd_check(a: &CheckArgs) -> Outcome {
    let ds = Dataset::read_csv(&a.data)?;
    let report = ConditionReport { quadratic: check_quadratic_condition(&ds)?, necessary: check_necessary_condition(&ds)? };
    let mut valid = true;
    println!("quadratic: {}", report.quadratic.label());
    match &report.quadratic {
        QuadraticVerdict::Yes { certificate } => {
            valid &= certificate.verify(&ds);
            println!("  A = {:?}", certificate.a.rows());
            println!("  c2 = {:?}, margin = {:?}", certificate.c2, certificate.c1);
        }
        QuadraticVerdict::No { certificate } => {
            valid &= certificate.verify(&ds);
            println!("  lambda = {:?}", certificate.lambda);
            println!("  definiteness = {:?}, eigenvalue margin = {:?}", certificate.definiteness, certificate.min_abs_eig_margin);
        }
        QuadraticVerdict::Undecided { reason } => println!("  {reason}"),
    }
    println!("necessary: {}", report.necessary.label());
    match &report.necessary {
        NecessaryVerdict::Holds { certificate } => {
            valid &= certificate.verify(&ds);
            println!("  A = {:?}", certificate.a.rows());
        }
        NecessaryVerdict::Fails { certificate } => {
            valid &= certificate.verify_mean_constrained(&ds);
            println!("  lambda = {:?}", certificate.lambda);
            println!("  span margin = {:?}, mean residual = {:?}", certificate.span_margin, certificate.mean_residual);
        }
        NecessaryVerdict::Undecided { reason } => println!("  {reason}"),
    }
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if !valid {
        return Err(Failure::Violation("a returned certificate failed verification".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct LeastSquaresReport {
    law: String,
    report: spurmin_core::population::PointIntervalReport,
    monte_carlo: Option<spurmin_core::population::MonteCarlo>,
}

fn cmd_least_squares(a: &LeastSquaresArgs) -> Outcome {
    let law = if a.shifted { PointIntervalLaw::shifted() } else { PointIntervalLaw::standard() };
    let report = point_interval_report(&law)?;
    let monte_carlo = if a.samples > 0 {
        Some(monte_carlo_rate(&law, &report.fit, a.samples, &mut rng(a.seed.require()?, 0))?)
    } else {
        None
    };
    println!("slope: {}", report.fit.slope);
    println!("intercept: {}", report.fit.intercept);
    println!("rate: {}", report.rate);
    if let Some(mc) = &monte_carlo {
        println!("monte_carlo_rate: {:?} (z = {:.3})", mc.rate, mc.z_score);
    }
    let rate = report.rate;
    if let Some(p) = &a.out {
        write_json(p, &LeastSquaresReport { law: if a.shifted { "shifted" } else { "standard" }.into(), report, monte_carlo })?;
    }
    if !a.shifted && rate < spurmin_core::population::Q::new(1, 16) {
        return Err(Failure::Violation(format!("rate {rate} is below 1/16")));
    }
    Ok(())
}

fn cmd_quadloss(a: &QuadlossArgs) -> Outcome {
    let examples = match a.example.as_str() {
        "all" => vec![QuadlossExample::Subspace, QuadlossExample::Linsep],
        s => vec![QuadlossExample::parse(s)?],
    };
    let flips: &[bool] = if a.flipped { &[false, true] } else { &[false] };
    let mut reports = Vec::new();
    let mut short = Vec::new();
    let quarter = spurmin_core::population::Q::new(1, 4);
    for e in examples {
        for &f in flips {
            let r = quadloss_report(e, e.default_alpha(), f)?;
            println!("{}{}: training_error {} loss {}", e.name(), if f { " (flipped)" } else { "" }, r.training_error, r.loss);
            if r.training_error < quarter {
                short.push(format!("{}{} has error {}", e.name(), if f { " (flipped)" } else { "" }, r.training_error));
            }
            reports.push(r);
        }
    }
    if let Some(p) = &a.out {
        write_json(p, &reports)?;
    }
    if !short.is_empty() {
        return Err(Failure::Violation(format!("below the 1/4 bound: {}", short.join("; "))));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Construct(a) => cmd_construct(a),
        Command::Certify(a) => cmd_certify(a),
        Command::CheckCondition(a) => cmd_check(a),
        Command::LeastSquares(a) => cmd_least_squares(a),
        Command::Quadloss(a) => cmd_quadloss(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(m)) => {
            eprintln!("claim violated: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
